#include "rp2/weights_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "rp2/error.hpp"

namespace rp2 {
namespace {

static_assert(std::endian::native == std::endian::little, "RPW1 writer assumes a little-endian host");

constexpr std::array<char, 4> kMagic{'R', 'P', 'W', '1'};

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  bool read(void* dst, std::size_t n) {
    is_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(is_.gcount()) == n;
  }
  std::uint32_t u32(const std::string& context) {
    std::uint32_t v = 0;
    if (!read(&v, sizeof v)) throw FormatError("truncated file while reading " + context);
    return v;
  }

 private:
  std::istream& is_;
};

}  // namespace

void write_rpw(const RpwFile& file, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kMagic.data(), kMagic.size());
  put_u32(os, static_cast<std::uint32_t>(file.architecture_id.size()));
  os.write(file.architecture_id.data(), static_cast<std::streamsize>(file.architecture_id.size()));
  put_u32(os, file.class_count);
  put_u32(os, file.input_side);
  for (const Tensor& t : file.tensors) {
    put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) put_u32(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
  }
  if (!os) throw IoError("write failed for " + path.string());
}

RpwFile read_rpw(const std::filesystem::path& path, const std::vector<std::string>& tensor_names,
                 std::string_view expected_architecture) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  Reader r(is);
  std::array<char, 4> magic{};
  if (!r.read(magic.data(), magic.size()) || magic != kMagic) throw FormatError("bad magic in " + path.string());

  RpwFile file;
  const std::uint32_t id_len = r.u32("architecture id length");
  if (id_len > 256) throw FormatError("architecture id length " + std::to_string(id_len) + " is implausible");
  file.architecture_id.resize(id_len);
  if (!r.read(file.architecture_id.data(), id_len)) throw FormatError("truncated file while reading architecture id");
  if (!expected_architecture.empty() && file.architecture_id != expected_architecture) {
    throw FormatError("architecture mismatch: file has '" + file.architecture_id + "', expected '" +
                      std::string(expected_architecture) + "'");
  }
  file.class_count = r.u32("class_count");
  file.input_side = r.u32("input_side");

  for (const std::string& name : tensor_names) {
    const std::uint32_t rank = r.u32("rank of layer " + name);
    if (rank == 0 || rank > 8) throw FormatError("layer " + name + " has invalid rank " + std::to_string(rank));
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::uint32_t d = r.u32("dims of layer " + name);
      if (d > (1u << 24)) throw FormatError("layer " + name + " has implausible dimension " + std::to_string(d));
      shape.push_back(static_cast<int>(d));
    }
    Tensor t(shape);
    if (!r.read(t.data(), t.size() * sizeof(float))) {
      throw FormatError("truncated file inside layer " + name);
    }
    file.tensors.push_back(std::move(t));
  }
  char extra = 0;
  if (r.read(&extra, 1)) throw FormatError("trailing bytes after last tensor in " + path.string());
  return file;
}

void save_weights(const ModelParameters& params, const std::filesystem::path& path) {
  validate_parameters(params);
  write_rpw({params.architecture_id, static_cast<std::uint32_t>(params.class_count),
             static_cast<std::uint32_t>(params.input_side), params.tensors},
            path);
}

ModelParameters load_weights(const std::filesystem::path& path) {
  // The id decides the layer list, so peek at the header first.
  std::string arch;
  {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    Reader r(is);
    std::array<char, 4> magic{};
    if (!r.read(magic.data(), magic.size()) || magic != kMagic) throw FormatError("bad magic in " + path.string());
    const std::uint32_t id_len = r.u32("architecture id length");
    if (id_len > 256) throw FormatError("architecture id length is implausible");
    arch.resize(id_len);
    if (!r.read(arch.data(), id_len)) throw FormatError("truncated file while reading architecture id");
  }
  ModelParameters probe;
  probe.architecture_id = arch;
  std::vector<std::string> names;
  try {
    names = probe.layer_names();
  } catch (const ValidationError&) {
    throw FormatError("architecture mismatch: unknown architecture id '" + arch + "'");
  }
  RpwFile file = read_rpw(path, names, arch);
  ModelParameters params;
  params.architecture_id = file.architecture_id;
  params.class_count = static_cast<int>(file.class_count);
  params.input_side = static_cast<int>(file.input_side);
  params.tensors = std::move(file.tensors);
  try {
    validate_parameters(params);
  } catch (const ValidationError& e) {
    throw FormatError(std::string("architecture mismatch: ") + e.what());
  }
  return params;
}

}  // namespace rp2
