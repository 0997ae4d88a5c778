#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lumeneit/geometry.hpp"

namespace lumeneit {

/// Named per-element scalar written as VTK cell data next to the region labels.
struct CellField {
    std::string name;
    std::vector<double> values;
};

/// Legacy ASCII VTK unstructured grid: points, tetra cells, `region` cell data
/// and any extra cell fields.
void write_vtk(const Mesh& mesh, const std::filesystem::path& path,
               const std::vector<CellField>& fields = {});

/// Reads what write_vtk produces (tetra cells only). Electrodes are left empty;
/// load them with read_electrode_map.
Mesh read_vtk(const std::filesystem::path& path);

/// Sidecar electrode map, format:
///
///     # lumeneit electrode map
///     version 1
///     electrodes <count>
///     electrode <index 1-based> <face count>
///     <n0> <n1> <n2>        (0-based node ids, one face per line)
///     ...
void write_electrode_map(const Mesh& mesh, const std::filesystem::path& path);
void read_electrode_map(Mesh& mesh, const std::filesystem::path& path);

/// Mesh + sidecar in one call; the sidecar sits next to the VTK file with
/// extension `.electrodes`.
void save_mesh(const Mesh& mesh, const std::filesystem::path& vtk_path);
Mesh load_mesh(const std::filesystem::path& vtk_path);
std::filesystem::path electrode_map_path(const std::filesystem::path& vtk_path);

} // namespace lumeneit
