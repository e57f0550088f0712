#include "vsgg/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "vsgg/errors.hpp"

namespace vsgg {

namespace {

constexpr char kMagic[8] = {'V', 'S', 'G', 'G', 'C', 'P', '0', '1'};

template <typename T>
void write_pod(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& is, const std::string& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ParseError("checkpoint " + path + ": truncated");
  return v;
}

}  // namespace

void save_checkpoint(const ParamStore& params, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ParseError("checkpoint: cannot open " + path + " for write");
  os.write(kMagic, sizeof(kMagic));
  write_pod<uint64_t>(os, params.entries().size());
  for (const auto& [name, t] : params.entries()) {
    write_pod<uint32_t>(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<uint32_t>(os, static_cast<uint32_t>(t.shape().size()));
    for (int64_t d : t.shape()) write_pod<int64_t>(os, d);
    os.write(reinterpret_cast<const char*>(t.values().data()),
             static_cast<std::streamsize>(t.values().size() * sizeof(double)));
  }
  if (!os) throw ParseError("checkpoint: write failed for " + path);
}

void load_checkpoint(ParamStore& params, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ParseError("checkpoint " + path + ": bad magic");
  const auto count = read_pod<uint64_t>(is, path);
  if (count != params.entries().size())
    throw ParseError("checkpoint " + path + ": parameter count mismatch");
  for (uint64_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<uint32_t>(is, path);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw ParseError("checkpoint " + path + ": truncated name");
    if (!params.contains(name))
      throw ParseError("checkpoint " + path + ": unknown parameter " + name);
    Tensor t = params.at(name);
    const auto rank = read_pod<uint32_t>(is, path);
    Shape shape(rank);
    for (auto& d : shape) d = read_pod<int64_t>(is, path);
    if (shape != t.shape())
      throw ParseError("checkpoint " + path + ": shape mismatch for " + name);
    is.read(reinterpret_cast<char*>(t.values().data()),
            static_cast<std::streamsize>(t.values().size() * sizeof(double)));
    if (!is) throw ParseError("checkpoint " + path + ": truncated payload");
  }
}

}  // namespace vsgg
