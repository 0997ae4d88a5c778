#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace lumeneit {

/// Catheter shaft carrying the electrode rings. Lengths in mm.
struct CatheterSpec {
    double shaft_diameter = 5.3;
    int ring_count = 2;
    int electrodes_per_ring = 8;
    double ring_spacing = 10.0;    // axial centre-to-centre distance between rings
    double electrode_width = 1.0;  // circumferential
    double electrode_height = 2.0; // axial
    double shaft_length = 40.0;    // axial extent of the simulated balloon

    double shaft_radius() const { return 0.5 * shaft_diameter; }
    int electrode_count() const { return ring_count * electrodes_per_ring; }
    /// Azimuth (rad) of the centre of electrode `index` (0-based, any ring).
    double electrode_azimuth(int index) const;
    /// Axial centre (mm) of ring `ring` (0-based). Rings are centred on z = 0.
    double ring_z(int ring) const;

    /// Throws ParameterError when an invariant is violated.
    void validate() const;

    /// Default axial domain length for a given ring spacing.
    static double default_shaft_length(double ring_spacing) { return ring_spacing + 30.0; }
};

enum class LumenKind { circle, ellipse, crescent, indented };

std::string to_string(LumenKind kind);
LumenKind lumen_kind_from_string(const std::string& name);

/// Parametric lumen (balloon wall) cross-section. Angles in degrees, lengths in mm.
///
/// The wall is described in polar form r = wall_radius(theta, z) around the
/// catheter axis. `clamp_radius` models a balloon that has not yet reached the
/// wall: the effective boundary is min(clamp_radius, wall).
struct LumenProfile {
    LumenKind kind = LumenKind::circle;
    double major_diameter = 25.0;
    double aspect_ratio = 1.0;
    double rotation = 0.0; // azimuth of the major axis

    double crescent_depth = 6.0;
    double crescent_extent = 120.0;
    double crescent_center = 90.0;

    double indent_depth = 4.0;
    double indent_center = 0.0;
    double indent_arc_halfwidth = 8.0;   // arc length at the wall
    double indent_axial_halfwidth = 8.0; // along the axis, centred on z = 0

    double clamp_radius = 0.0; // <= 0 disables clamping

    static LumenProfile circle(double diameter);
    static LumenProfile ellipse(double major_diameter, double aspect_ratio, double rotation_deg = 0.0);
    static LumenProfile crescent(double diameter, double depth = 6.0, double extent_deg = 120.0,
                                 double center_deg = 90.0);
    static LumenProfile indented(double diameter, double depth = 4.0, double center_deg = 0.0);

    /// Wall radius (mm) at azimuth theta (rad) and axial position z (mm).
    double wall_radius(double theta, double z = 0.0) const;
    /// Upper bound of wall_radius over all theta and z.
    double max_radius() const;
    /// Lower bound of wall_radius over all theta and z (sampled).
    double min_radius() const;

    void validate(const CatheterSpec& catheter) const;
};

/// Discretisation counts for the mapped annulus mesh.
struct MeshResolution {
    int electrode_segments = 2; // angular segments across one electrode
    int gap_segments = 4;       // angular segments between neighbouring electrodes
    int radial_bands = 8;
    double radial_grading = 8.0; // wall band thickness / shaft band thickness
    int axial_layers = 30;
    double axial_grading = 3.0;  // coarsest / finest layer thickness
    double slice_thickness = 2.0;

    static MeshResolution for_size(double max_wall_radius, const CatheterSpec& catheter,
                                   double target_size);
};

/// Planar triangulation of the annulus between the shaft and the lumen wall.
///
/// Vertices are arranged on `angles.size()` spokes and `radial_fractions.size()`
/// rings. Vertex (ring, spoke) has id ring * spokes + spoke; ring 0 lies on the
/// shaft, the last ring on the wall.
struct CrossSection {
    std::vector<double> angles;           // spoke azimuths, rad, ascending in [0, 2pi)
    std::vector<double> radial_fractions; // 0 at the shaft, 1 at the wall
    std::vector<Eigen::Vector2d> points;  // positions at z = 0
    std::vector<std::array<int, 3>> triangles; // counter-clockwise
    double inner_radius = 0.0;
    double reference_gap = 0.0; // narrowest shaft-to-wall gap of the profile
    LumenProfile profile;

    /// Radius of ring `ring` where the wall sits at `wall`. Inner rings keep
    /// absolute offsets from the shaft; only the outer rings stretch to the wall.
    double ring_radius(int ring, double wall) const;
    int spokes() const { return static_cast<int>(angles.size()); }
    int rings() const { return static_cast<int>(radial_fractions.size()); }
    double area() const;
};

using Face = std::array<int, 3>;
using Tetra = std::array<int, 4>;

inline constexpr int kRegionBulk = 1;
inline constexpr int kRegionMidSlice = 2;

struct Mesh {
    std::vector<Eigen::Vector3d> nodes; // mm
    std::vector<Tetra> elements;
    std::vector<int> element_region;
    std::vector<std::vector<Face>> electrodes; // 0-based electrode index -> boundary faces
    double characteristic_size = 0.0;

    // Geometry the mesh was generated from, when known.
    std::optional<LumenProfile> profile;
    std::optional<CatheterSpec> catheter;
    double slice_thickness = 2.0;

    std::size_t node_count() const { return nodes.size(); }
    std::size_t element_count() const { return elements.size(); }
    std::size_t electrode_count() const { return electrodes.size(); }

    double element_volume(std::size_t e) const; // signed, mm^3
    Eigen::Vector3d element_centroid(std::size_t e) const;
    double electrode_area(std::size_t electrode) const; // mm^2
    double total_volume() const;
    /// Wall radius at a point, from the stored profile or estimated from the nodes.
    double wall_radius_at(double theta, double z) const;
};

CrossSection build_cross_section(const LumenProfile& profile, const CatheterSpec& catheter,
                                 double target_size);
CrossSection build_cross_section(const LumenProfile& profile, const CatheterSpec& catheter,
                                 const MeshResolution& resolution);

/// Axial node positions for `axial_layers` layers: refined at the electrode
/// rings and with breakpoints on the electrode edges and the mid-slice band.
std::vector<double> axial_nodes(const CatheterSpec& catheter, int axial_layers,
                                double axial_grading = 3.0, double slice_thickness = 2.0);

Mesh extrude_mesh(const CrossSection& section, const CatheterSpec& catheter, int axial_layers,
                  double axial_grading = 3.0, double slice_thickness = 2.0);

/// Convenience: cross-section + extrusion at a resolution.
Mesh build_phantom_mesh(const LumenProfile& profile, const CatheterSpec& catheter,
                        const MeshResolution& resolution);
Mesh build_phantom_mesh(const LumenProfile& profile, const CatheterSpec& catheter,
                        double target_size = 2.5);

/// Solid cylinder along z with two end-cap electrodes covering the full end faces.
Mesh build_end_cap_cylinder(double radius, double length, int spokes, int rings, int layers);

struct QualityReport {
    std::size_t element_count = 0;
    double min_dihedral_deg = 0.0;
    double max_dihedral_deg = 0.0;
    double volume_sum = 0.0;          // signed, mm^3
    double abs_volume_sum = 0.0;
    std::vector<std::size_t> inverted; // elements with non-positive signed volume
    std::vector<std::size_t> flagged;  // aspect ratio above the bound
    std::vector<double> aspect_bin_edges;
    std::vector<std::size_t> aspect_histogram;
    double aspect_ratio_bound = 0.0;

    bool volume_check_passed() const { return inverted.empty(); }
};

/// Aspect ratio is normalised so that a regular tetrahedron scores 1.
double tetra_aspect_ratio(const Mesh& mesh, std::size_t element);
QualityReport mesh_quality(const Mesh& mesh, double aspect_ratio_bound = 50.0);

} // namespace lumeneit
