#pragma once

#include <string>

#include "argus/volume.hpp"

namespace argus {

/// `.ctvol` layout: magic "CTV1"; little-endian u32 nx, ny, nz; f64 sx, sy,
/// sz; u8 dtype code (0 = f32); then nx*ny*nz f32 voxels, x-fastest.
/// write_ctvol followed by read_ctvol is a bitwise identity.
void write_ctvol(const Volume& v, const std::string& path);
Volume read_ctvol(const std::string& path);

/// Fixture loader: a JSON descriptor {"dims": [nx,ny,nz], "spacing":
/// [sx,sy,sz], "data": "voxels.raw"} next to a raw little-endian f32 array.
/// A missing "data" key defaults to the descriptor path with a .raw suffix.
Volume read_raw_with_descriptor(const std::string& json_path);

/// Dispatches on extension: .json descriptors go through the fixture loader,
/// everything else is treated as .ctvol.
Volume load_volume(const std::string& path);

}  // namespace argus
