#pragma once

#include <cstdint>

namespace pcw {

using TokenId = std::int32_t;

}  // namespace pcw
