#include "thinfb/field_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>

#include "thinfb/error.hpp"

namespace thinfb {

namespace {

constexpr char kTrailer[8] = {'T', 'H', 'F', 'B', 'H', 'A', 'S', 'H'};

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
bool get(std::istream& is, T& v) {
  return static_cast<bool>(is.read(reinterpret_cast<char*>(&v), sizeof(T)));
}

}  // namespace

void write_field(std::ostream& os, const GridField& u, std::optional<std::uint64_t> config_hash) {
  put<std::int32_t>(os, u.grid.dim);
  put<std::int32_t>(os, u.grid.n);
  put<std::int32_t>(os, u.even ? 1 : 0);
  os.write(reinterpret_cast<const char*>(u.values.data()),
           static_cast<std::streamsize>(u.values.size() * sizeof(double)));
  if (config_hash) {
    os.write(kTrailer, sizeof(kTrailer));
    put<std::uint64_t>(os, *config_hash);
  }
  if (!os) throw Error("failed to write field");
}

void write_field(const std::string& path, const GridField& u, std::optional<std::uint64_t> config_hash) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("out", "cannot open " + path);
  write_field(os, u, config_hash);
}

LoadedField read_field(std::istream& is) {
  std::int32_t d = 0, n = 0, sym = 0;
  if (!get(is, d) || !get(is, n) || !get(is, sym)) throw ValidationError("field", "truncated header");
  LoadedField out;
  out.field = GridField(Grid(d, n));
  out.field.even = sym != 0;
  auto& v = out.field.values;
  if (!is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double))))
    throw ValidationError("field", "truncated values");
  for (double x : v)
    if (!std::isfinite(x)) throw ValidationError("field", "non-finite value");
  char tag[8];
  if (is.read(tag, sizeof(tag)) && std::memcmp(tag, kTrailer, sizeof(tag)) == 0) {
    std::uint64_t hsh = 0;
    if (get(is, hsh)) out.config_hash = hsh;
  }
  return out;
}

LoadedField read_field(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("field", "cannot open " + path);
  return read_field(is);
}

void write_field_csv(std::ostream& os, const GridField& u, std::optional<std::uint64_t> config_hash) {
  if (config_hash) os << "# config_hash=" << std::hex << *config_hash << std::dec << '\n';
  const char* names[] = {"x1", "x2", "x3"};
  for (int i = 0; i < u.grid.dim; ++i) os << names[i] << ',';
  os << "u\n" << std::setprecision(17);
  for (std::size_t k = 0; k < u.grid.size(); ++k) {
    const Point x = u.grid.point(k);
    for (int i = 0; i < u.grid.dim; ++i) os << x[i] << ',';
    os << u[k] << '\n';
  }
}

void write_field_csv(const std::string& path, const GridField& u, std::optional<std::uint64_t> config_hash) {
  std::ofstream os(path);
  if (!os) throw ValidationError("out", "cannot open " + path);
  write_field_csv(os, u, config_hash);
}

}  // namespace thinfb
