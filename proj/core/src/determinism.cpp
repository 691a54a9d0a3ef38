#include "ssacl/determinism.hpp"

#include <cstdlib>
#include <cstring>

#include <torch/torch.h>

namespace ssacl {

bool deterministic_mode() {
  const char* v = std::getenv("SSACL_DETERMINISTIC");
  return v != nullptr && std::strcmp(v, "1") == 0;
}

void seed_everything(std::uint64_t seed) {
  torch::manual_seed(seed);
  if (deterministic_mode()) {
    at::globalContext().setDeterministicAlgorithms(true, /*warn_only=*/true);
    torch::set_num_threads(1);
  }
}

}  // namespace ssacl
