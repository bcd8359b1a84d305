#pragma once

#include <cmath>
#include <cstdint>

#include "zng/types.hpp"

namespace zng {

// Clock expressed as a rational frequency in GHz so that nanosecond->cycle
// conversion stays in integer arithmetic (1.2 GHz == 6/5 cycles per ns).
struct Clock {
  std::uint64_t num = 6;
  std::uint64_t den = 5;

  Cycles from_ns(std::uint64_t ns) const { return (ns * num + den - 1) / den; }

  // For the few sub-nanosecond datasheet values (e.g. Optane tCL 8.9 ns).
  Cycles from_ns(double ns) const {
    return static_cast<Cycles>(
        std::ceil(ns * static_cast<double>(num) / static_cast<double>(den) -
                  1e-9));
  }

  double ns_of(Cycles c) const {
    return static_cast<double>(c) * static_cast<double>(den) /
           static_cast<double>(num);
  }

  double ghz() const {
    return static_cast<double>(num) / static_cast<double>(den);
  }
};

// Z-NAND array and interface timing.
struct ZTiming {
  std::uint64_t read_ns = 3000;       // array sense
  std::uint64_t program_ns = 100000;  // page program
  std::uint64_t erase_ns = 1000000;   // block erase (datasheet value not
                                      // published; configurable)
  std::uint64_t interface_mts = 800;  // ONFI transfer rate, MT/s
  std::uint64_t interface_lanes = 8;  // bytes per transfer beat

  // Time to move `bytes` over one package interface.
  std::uint64_t transfer_ns(std::uint64_t bytes) const {
    const std::uint64_t bytes_per_us = interface_mts * interface_lanes;
    // ns = bytes * 1000 / (MT/s * lanes)
    return (bytes * 1000 + bytes_per_us - 1) / bytes_per_us;
  }
};

enum class FlashOpKind : std::uint8_t {
  ArrayRead,
  Program,
  Erase,
  RegRead,
  RegWrite,
  RegMove,
};

// Base service time of one flash operation, before queuing/contention.
inline std::uint64_t service_time_ns(const ZTiming& t, FlashOpKind kind,
                                     std::uint64_t bytes) {
  switch (kind) {
    case FlashOpKind::ArrayRead: return t.read_ns;
    case FlashOpKind::Program: return t.program_ns;
    case FlashOpKind::Erase: return t.erase_ns;
    case FlashOpKind::RegRead:
    case FlashOpKind::RegWrite:
    case FlashOpKind::RegMove: return t.transfer_ns(bytes);
  }
  return 0;
}

}  // namespace zng
