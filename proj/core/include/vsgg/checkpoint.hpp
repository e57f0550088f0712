#pragma once

#include <string>

#include "vsgg/params.hpp"

namespace vsgg {

// Parameter checkpoint container. Binary layout (all integers little-endian):
//
//   bytes 0..7   magic "VSGGCP01"
//   u64          parameter count
//   per parameter, in ascending name order:
//     u32        name length in bytes
//     bytes      name (UTF-8, no terminator)
//     u32        rank
//     i64 * rank extents, row-major order
//     f64 * n    payload, IEEE-754 little-endian, n = product of extents
//
// Values are written verbatim from memory, so save -> load -> save is
// byte-identical.
void save_checkpoint(const ParamStore& params, const std::string& path);

// Loads values into an existing store; names and shapes must match exactly.
void load_checkpoint(ParamStore& params, const std::string& path);

}  // namespace vsgg
