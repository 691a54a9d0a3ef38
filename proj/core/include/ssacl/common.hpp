#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

namespace ssacl {

using json = nlohmann::json;

// Half-open pixel rectangle [x0,x1) x [y0,y1).
struct Rect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  long area() const { return static_cast<long>(width()) * height(); }
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  bool operator==(const Rect&) const = default;
};

std::ostream& operator<<(std::ostream& os, const Rect& r);

void to_json(json& j, const Rect& r);
void from_json(const json& j, Rect& r);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Portable binary tensor container (magic "SSTB", little-endian f32).
void write_tensor_binary(const std::filesystem::path& path, const torch::Tensor& t);
torch::Tensor read_tensor_binary(const std::filesystem::path& path);

// splitmix64; used to derive independent per-sample/per-step seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace ssacl
