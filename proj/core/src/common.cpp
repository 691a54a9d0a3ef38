#include "ssacl/common.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "ssacl/errors.hpp"

namespace ssacl {

std::ostream& operator<<(std::ostream& os, const Rect& r) {
  return os << "[" << r.x0 << "," << r.y0 << "," << r.x1 << "," << r.y1 << ")";
}

void to_json(json& j, const Rect& r) { j = json::array({r.x0, r.y0, r.x1, r.y1}); }

void from_json(const json& j, Rect& r) {
  if (!j.is_array() || j.size() != 4) {
    throw ValidationError("rect must be a 4-element array [x0,y0,x1,y1]");
  }
  r.x0 = j[0].get<int>();
  r.y0 = j[1].get<int>();
  r.x1 = j[2].get<int>();
  r.y1 = j[3].get<int>();
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return text;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  out << text;
}

namespace {
constexpr char kMagic[4] = {'S', 'S', 'T', 'B'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void write_tensor_binary(const std::filesystem::path& path, const torch::Tensor& t) {
  auto cpu = t.to(torch::kFloat32).contiguous();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write tensor file: " + path.string());
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&kVersion), 4);
  const std::uint32_t ndim = static_cast<std::uint32_t>(cpu.dim());
  out.write(reinterpret_cast<const char*>(&ndim), 4);
  for (std::uint32_t i = 0; i < ndim; ++i) {
    const std::uint64_t d = static_cast<std::uint64_t>(cpu.size(i));
    out.write(reinterpret_cast<const char*>(&d), 8);
  }
  out.write(reinterpret_cast<const char*>(cpu.data_ptr<float>()),
            static_cast<std::streamsize>(cpu.numel() * sizeof(float)));
}

torch::Tensor read_tensor_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open tensor file: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw ValidationError("bad tensor file magic: " + path.string());
  }
  std::uint32_t version = 0, ndim = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&ndim), 4);
  if (version != kVersion) throw ValidationError("unsupported tensor file version");
  std::vector<std::int64_t> dims(ndim);
  std::int64_t numel = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    std::uint64_t d = 0;
    in.read(reinterpret_cast<char*>(&d), 8);
    dims[i] = static_cast<std::int64_t>(d);
    numel *= dims[i];
  }
  auto t = torch::empty(dims, torch::kFloat32);
  in.read(reinterpret_cast<char*>(t.data_ptr<float>()),
          static_cast<std::streamsize>(numel * sizeof(float)));
  if (!in) throw ValidationError("truncated tensor file: " + path.string());
  return t;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace ssacl
