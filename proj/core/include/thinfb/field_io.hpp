#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "thinfb/grid.hpp"

namespace thinfb {

// Flat binary layout: int32 d, int32 n, int32 symmetry flag, then the values as
// little-endian doubles with the last axis fastest. An optional trailer
// "THFBHASH" + uint64 records the configuration hash; readers may ignore it.
void write_field(std::ostream& os, const GridField& u, std::optional<std::uint64_t> config_hash = {});
void write_field(const std::string& path, const GridField& u, std::optional<std::uint64_t> config_hash = {});

struct LoadedField {
  GridField field;
  std::optional<std::uint64_t> config_hash;
};
LoadedField read_field(std::istream& is);
LoadedField read_field(const std::string& path);

// One row per node: coordinates then value; a leading comment carries the hash.
void write_field_csv(std::ostream& os, const GridField& u, std::optional<std::uint64_t> config_hash = {});
void write_field_csv(const std::string& path, const GridField& u, std::optional<std::uint64_t> config_hash = {});

}  // namespace thinfb
