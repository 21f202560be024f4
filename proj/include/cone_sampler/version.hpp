#pragma once

namespace cone_sampler {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace cone_sampler
