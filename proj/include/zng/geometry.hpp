#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zng/types.hpp"

namespace zng {

// Flash array geometry. Defaults follow the 16-channel / 8-die / 8-plane /
// 1024-block / 384-page configuration. Global block numbers enumerate
// channel-first, then die, then plane, then block-within-plane, so that
// consecutive block numbers stripe across channels.
struct Geometry {
  std::uint32_t channels = 16;
  std::uint32_t packages_per_channel = 1;
  std::uint32_t dies = 8;
  std::uint32_t planes = 8;  // planes per die
  std::uint32_t blocks_per_plane = 1024;
  std::uint32_t pages_per_block = 384;
  double op_fraction = 0.07;  // blocks reserved per plane for log/GC headroom

  std::uint32_t packages_total() const {
    return channels * packages_per_channel;
  }
  std::uint32_t planes_per_package() const { return dies * planes; }
  std::uint32_t planes_total() const {
    return packages_total() * planes_per_package();
  }
  std::uint32_t data_blocks_per_plane() const {
    const auto op = static_cast<std::uint32_t>(
        static_cast<double>(blocks_per_plane) * op_fraction);
    return blocks_per_plane - (op > 0 ? op : 1);
  }
  std::uint64_t block_bytes() const {
    return static_cast<std::uint64_t>(pages_per_block) * kPageBytes;
  }
  std::uint64_t blocks_total() const {
    return static_cast<std::uint64_t>(planes_total()) * blocks_per_plane;
  }
  std::uint64_t data_blocks_total() const {
    return static_cast<std::uint64_t>(planes_total()) *
           data_blocks_per_plane();
  }
  std::uint64_t data_bytes() const {
    return data_blocks_total() * block_bytes();
  }
  std::uint64_t pages_total() const {
    return blocks_total() * pages_per_block;
  }

  // Striping order: channel -> package -> die -> plane -> block.
  FlashAddress decompose(std::uint64_t global_block) const {
    FlashAddress a;
    a.channel = static_cast<std::uint32_t>(global_block % channels);
    std::uint64_t r = global_block / channels;
    a.package = static_cast<std::uint32_t>(r % packages_per_channel);
    r /= packages_per_channel;
    a.die = static_cast<std::uint32_t>(r % dies);
    r /= dies;
    a.plane = static_cast<std::uint32_t>(r % planes);
    r /= planes;
    a.block = static_cast<std::uint32_t>(r);
    return a;
  }

  std::uint64_t compose(const FlashAddress& a) const {
    std::uint64_t r = a.block;
    r = r * planes + a.plane;
    r = r * dies + a.die;
    r = r * packages_per_channel + a.package;
    r = r * channels + a.channel;
    return r;
  }

  // Flattened plane index, globally unique.
  std::uint32_t plane_index(const FlashAddress& a) const {
    return ((a.channel * packages_per_channel + a.package) *
                planes_per_package() +
            a.die * planes + a.plane);
  }

  std::uint32_t plane_of_block(std::uint64_t global_block) const {
    return plane_index(decompose(global_block));
  }

  // Global block id of block `block` on flattened plane `plane`.
  std::uint64_t block_on_plane(std::uint32_t plane,
                               std::uint32_t block) const {
    FlashAddress a;
    const std::uint32_t per_pkg = planes_per_package();
    a.channel = plane / per_pkg / packages_per_channel;
    a.package = (plane / per_pkg) % packages_per_channel;
    const std::uint32_t in_pkg = plane % per_pkg;
    a.die = in_pkg / planes;
    a.plane = in_pkg % planes;
    a.block = block;
    return compose(a);
  }

  bool block_is_data_region(std::uint64_t global_block) const {
    return global_block < data_blocks_total();
  }

  std::vector<std::string> validate() const {
    std::vector<std::string> errs;
    if (channels == 0 || packages_per_channel == 0 || dies == 0 ||
        planes == 0 || blocks_per_plane == 0 || pages_per_block == 0)
      errs.push_back("geometry: all dimensions must be nonzero");
    if (op_fraction <= 0.0 || op_fraction >= 0.5)
      errs.push_back("geometry: op_fraction must be in (0, 0.5)");
    if (blocks_per_plane > 0 && data_blocks_per_plane() == 0)
      errs.push_back("geometry: over-provisioning leaves no data blocks");
    return errs;
  }
};

inline std::uint32_t bits_for(std::uint64_t n) {
  std::uint32_t b = 0;
  while ((1ull << b) < n) ++b;
  return b == 0 ? 1 : b;
}

}  // namespace zng
