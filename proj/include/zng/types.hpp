#pragma once

#include <cstdint>
#include <string>

namespace zng {

// Simulated time is counted in interconnect clock cycles (1.2 GHz default).
using Cycles = std::uint64_t;

constexpr std::uint64_t kLineBytes = 128;   // L2-level access granularity
constexpr std::uint64_t kPageBytes = 4096;  // flash page
constexpr std::uint64_t kSectorsPerPage = kPageBytes / kLineBytes;

enum class Op : std::uint8_t { Read = 0, Write = 1 };

// One post-coalescing, post-L1-miss memory request.
struct MemoryRequest {
  Cycles issue_cycle = 0;
  std::uint64_t vaddr = 0;
  std::uint64_t pc = 0;
  std::uint16_t warp_id = 0;
  std::uint8_t app_id = 0;
  Op op = Op::Read;

  static constexpr std::uint64_t size = kLineBytes;

  std::uint64_t line() const { return vaddr / kLineBytes; }
};

enum class BlockRole : std::uint8_t { Data = 0, Log = 1 };

// Decomposed physical flash location.
struct FlashAddress {
  std::uint32_t channel = 0;
  std::uint32_t package = 0;
  std::uint32_t die = 0;
  std::uint32_t plane = 0;
  std::uint32_t block = 0;       // block index within plane
  std::uint32_t page = 0;        // physical page within block
  BlockRole role = BlockRole::Data;
  std::uint32_t page_index = 0;  // logical page offset within the block

  bool operator==(const FlashAddress&) const = default;
};

struct SimError {
  std::string module;
  std::string what;
};

class sim_exception : public std::exception {
 public:
  sim_exception(std::string module, std::string what)
      : err_{std::move(module), std::move(what)},
        msg_(err_.module + ": " + err_.what) {}
  const char* what() const noexcept override { return msg_.c_str(); }
  const SimError& error() const { return err_; }

 private:
  SimError err_;
  std::string msg_;
};

}  // namespace zng
