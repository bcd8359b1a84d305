#pragma once

// Test-side oracles, kept independent of the implementation paths they
// check.

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "zng/trace.hpp"
#include "zng/types.hpp"

namespace zng::test {

// Flat associative-map replay of a trace. Writes to a 128B line get
// sequence numbers 1,2,3... per line; a read's expected version is the
// count of writes to its line that precede it in trace order.
class FlatOracle {
 public:
  explicit FlatOracle(const std::vector<MemoryRequest>& trace) {
    expected_.reserve(trace.size());
    std::unordered_map<std::uint64_t, std::uint64_t> map;
    for (const auto& r : trace) {
      if (r.op == Op::Write) {
        ++map[r.line()];
        expected_.push_back(0);
      } else {
        auto it = map.find(r.line());
        expected_.push_back(it == map.end() ? 0 : it->second);
      }
    }
  }

  std::uint64_t expected(std::size_t trace_index) const {
    return expected_[trace_index];
  }

 private:
  std::vector<std::uint64_t> expected_;
};

// Reference flash-address decomposer: enumerates the striping order with
// plain loops instead of the production arithmetic.
struct RefCoord {
  std::uint32_t channel, package, die, plane, block;
};

class RefDecomposer {
 public:
  RefDecomposer(std::uint32_t channels, std::uint32_t pkgs,
                std::uint32_t dies, std::uint32_t planes,
                std::uint32_t blocks)
      : pkgs_(pkgs), dies_(dies), planes_(planes) {
    for (std::uint32_t b = 0; b < blocks; ++b)
      for (std::uint32_t pl = 0; pl < planes; ++pl)
        for (std::uint32_t d = 0; d < dies; ++d)
          for (std::uint32_t pk = 0; pk < pkgs; ++pk)
            for (std::uint32_t c = 0; c < channels; ++c)
              order_.push_back({c, pk, d, pl, b});
  }

  RefCoord coord(std::uint64_t global_block) const {
    return order_.at(global_block);
  }

  std::uint32_t plane_index(std::uint64_t global_block) const {
    const RefCoord c = coord(global_block);
    return (c.channel * pkgs_ + c.package) * (dies_ * planes_) +
           c.die * planes_ + c.plane;
  }

 private:
  std::vector<RefCoord> order_;
  std::uint32_t pkgs_;
  std::uint32_t dies_;
  std::uint32_t planes_;
};

}  // namespace zng::test
