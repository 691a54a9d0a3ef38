#pragma once

#include <cstdint>

namespace ssacl {

// Seeds the tensor backend. Honors SSACL_DETERMINISTIC=1 by additionally
// forcing deterministic algorithms and single-threaded kernels.
void seed_everything(std::uint64_t seed);

bool deterministic_mode();

}  // namespace ssacl
