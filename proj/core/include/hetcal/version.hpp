#pragma once

namespace hetcal {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kArtifactName = "hetcal";

}  // namespace hetcal
