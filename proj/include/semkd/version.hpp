#pragma once

namespace semkd {

inline constexpr const char* kVersion = "0.1.0";

// Bump when a column is added, removed or renamed in the corresponding file.
inline constexpr int kReportSchemaVersion = 1;
inline constexpr int kPlotSchemaVersion = 1;

// Binary formats (network checkpoints, encoded semantic frames).
inline constexpr int kCheckpointVersion = 1;
inline constexpr int kFrameVersion = 1;

}  // namespace semkd
