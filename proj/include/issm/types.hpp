#pragma once

#include <cstdint>
#include <vector>

namespace issm {

/// Stable identifier of a sample within its dataset. Orders tie-breaks everywhere.
using SampleId = std::int64_t;
using IdList = std::vector<SampleId>;

}  // namespace issm
