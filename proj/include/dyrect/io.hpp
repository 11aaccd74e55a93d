#pragma once

#include "dyrect/core.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace dyrect {

// Volumes: `<stem>.raw` holds little-endian float32 values, x fastest, and
// `<stem>.meta` the key=value sidecar (nx, ny, nz, voxel_size_mm, origin_mm,
// unit). Values are narrowed to float32 on write.
void write_volume(const std::filesystem::path& stem, const ScalarField3& field,
                  const std::string& unit = "1/cm");
ScalarField3 read_volume(const std::filesystem::path& stem);

// Three volumes `<stem>_mu0`, `<stem>_mu1`, `<stem>_tstar`.
void write_event_volume(const std::filesystem::path& stem, const EventVolume& vol);
EventVolume read_event_volume(const std::filesystem::path& stem);

// Projections: `<stem>.raw` float32 [view][row][col], `<stem>.meta` with the
// detector description and `<stem>_views.csv` (index,angle_rad,time_rotations).
void write_projections(const std::filesystem::path& stem, const ProjectionSet& projections);
ProjectionSet read_projections(const std::filesystem::path& stem);

// Flat key=value parsing shared by the sidecars and the run config. Blank
// lines and lines starting with '#' are skipped; duplicate keys are an error.
std::map<std::string, std::string> parse_key_values(const std::string& text,
                                                    const std::string& source);
std::map<std::string, std::string> read_key_value_file(const std::filesystem::path& path);

std::filesystem::path with_suffix(const std::filesystem::path& stem, const std::string& suffix);

} // namespace dyrect
