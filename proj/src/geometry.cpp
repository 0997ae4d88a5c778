#include "lumeneit/geometry.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

#include "lumeneit/error.hpp"

namespace lumeneit {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kMinWallGap = 0.1;    // mm between shaft and wall
constexpr double kAxialMargin = 1.0;   // mm beyond the outer electrode edges
constexpr double kAxialGradingLength = 10.0;

double wrap_angle(double a) {
    a = std::fmod(a + kPi, kTwoPi);
    if (a < 0.0) a += kTwoPi;
    return a - kPi;
}

double deg2rad(double d) { return d * kPi / 180.0; }

double cosine_window(double distance, double halfwidth) {
    if (halfwidth <= 0.0 || distance >= halfwidth) return 0.0;
    return 0.5 * (1.0 + std::cos(kPi * distance / halfwidth));
}

// Radius at which a ray from the origin meets the crescent bite, or +inf.
double crescent_bite_radius(const LumenProfile& p, double theta) {
    const double radius = 0.5 * p.major_diameter;
    const double half = 0.5 * deg2rad(p.crescent_extent);
    const double phi = wrap_angle(theta - deg2rad(p.crescent_center));
    if (std::abs(phi) >= half) return std::numeric_limits<double>::infinity();
    const double apex = radius - p.crescent_depth;
    const double den = 2.0 * (apex - radius * std::cos(half));
    if (std::abs(den) < 1e-12) return apex / std::cos(phi); // straight chord
    // Bite circle centred on the local x axis through the apex and both chord ends.
    const double c = (apex * apex - radius * radius) / den;
    const double rho = std::abs(apex - c);
    const double b = c * std::cos(phi);
    const double disc = b * b - c * c + rho * rho;
    if (disc < 0.0) return std::numeric_limits<double>::infinity();
    if (std::abs(c) < rho) return b + std::sqrt(disc); // origin inside the bite circle
    return b - std::sqrt(disc);
}

// Layer-to-layer split of one prism into three tetrahedra. `order` holds the
// bottom triangle vertices sorted by the local precedence rule; the rule is
// shared by neighbouring prisms, which keeps the quad-face diagonals conforming.
void split_prism(const std::array<int, 3>& order, int bottom_offset, int top_offset,
                 std::vector<Tetra>& out) {
    const int a = order[0] + bottom_offset, b = order[1] + bottom_offset, c = order[2] + bottom_offset;
    const int at = order[0] + top_offset, bt = order[1] + top_offset, ct = order[2] + top_offset;
    out.push_back({a, b, c, ct});
    out.push_back({a, b, bt, ct});
    out.push_back({a, at, bt, ct});
}

std::array<int, 3> sort_by_precedence(std::array<int, 3> v,
                                      const std::function<bool(int, int)>& precedes) {
    // Exactly one vertex precedes both others; same for the last.
    std::array<int, 3> out{};
    for (int i = 0; i < 3; ++i) {
        const int x = v[i], y = v[(i + 1) % 3], z = v[(i + 2) % 3];
        if (precedes(x, y) && precedes(x, z)) out[0] = x;
        else if (precedes(y, x) && precedes(z, x)) out[2] = x;
        else out[1] = x;
    }
    return out;
}

double signed_volume(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c,
                     const Eigen::Vector3d& d) {
    return (b - a).dot((c - a).cross(d - a)) / 6.0;
}

void orient_positive(Mesh& mesh) {
    for (auto& t : mesh.elements) {
        if (signed_volume(mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]], mesh.nodes[t[3]]) < 0.0)
            std::swap(t[2], t[3]);
    }
}

double triangle_area(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
    return 0.5 * (b - a).cross(c - a).norm();
}

// Axial mesh density (layers per mm) relative to the finest layer size.
double axial_density(const CatheterSpec& cat, double z, double grading) {
    double dist = std::numeric_limits<double>::infinity();
    for (int r = 0; r < cat.ring_count; ++r) {
        const double d = std::abs(z - cat.ring_z(r)) - 0.5 * cat.electrode_height;
        dist = std::min(dist, std::max(0.0, d));
    }
    const double t = std::min(1.0, dist / kAxialGradingLength);
    return 1.0 / (1.0 + (grading - 1.0) * t);
}

double integrate_density(const CatheterSpec& cat, double a, double b, double grading) {
    constexpr int n = 128;
    const double h = (b - a) / n;
    double sum = 0.5 * (axial_density(cat, a, grading) + axial_density(cat, b, grading));
    for (int i = 1; i < n; ++i) sum += axial_density(cat, a + i * h, grading);
    return sum * h;
}

} // namespace

// ---------------------------------------------------------------- CatheterSpec

double CatheterSpec::electrode_azimuth(int index) const {
    const int k = index % electrodes_per_ring;
    return kTwoPi * k / electrodes_per_ring;
}

double CatheterSpec::ring_z(int ring) const {
    return (ring - 0.5 * (ring_count - 1)) * ring_spacing;
}

void CatheterSpec::validate() const {
    if (!(shaft_diameter > 0.0)) throw ParameterError("catheter: shaft_diameter must be positive");
    if (ring_count < 1 || electrodes_per_ring < 1)
        throw ParameterError("catheter: ring_count and electrodes_per_ring must be >= 1");
    if (!(electrode_width > 0.0) || !(electrode_height > 0.0))
        throw ParameterError("catheter: electrode dimensions must be positive");
    if (ring_count > 1 && !(ring_spacing > electrode_height))
        throw ParameterError("catheter: ring_spacing must exceed electrode_height");
    if (!(electrodes_per_ring * electrode_width < kPi * shaft_diameter))
        throw ParameterError("catheter: electrodes overlap around the shaft circumference");
    if (!(shaft_length > 0.0)) throw ParameterError("catheter: shaft_length must be positive");
}

// ---------------------------------------------------------------- LumenProfile

std::string to_string(LumenKind kind) {
    switch (kind) {
    case LumenKind::circle: return "circle";
    case LumenKind::ellipse: return "ellipse";
    case LumenKind::crescent: return "crescent";
    case LumenKind::indented: return "indented";
    }
    return "unknown";
}

LumenKind lumen_kind_from_string(const std::string& name) {
    if (name == "circle") return LumenKind::circle;
    if (name == "ellipse") return LumenKind::ellipse;
    if (name == "crescent") return LumenKind::crescent;
    if (name == "indented") return LumenKind::indented;
    throw ParameterError("unknown lumen kind '" + name + "'");
}

LumenProfile LumenProfile::circle(double diameter) {
    LumenProfile p;
    p.kind = LumenKind::circle;
    p.major_diameter = diameter;
    return p;
}

LumenProfile LumenProfile::ellipse(double major_diameter, double aspect_ratio, double rotation_deg) {
    LumenProfile p;
    p.kind = LumenKind::ellipse;
    p.major_diameter = major_diameter;
    p.aspect_ratio = aspect_ratio;
    p.rotation = rotation_deg;
    return p;
}

LumenProfile LumenProfile::crescent(double diameter, double depth, double extent_deg, double center_deg) {
    LumenProfile p;
    p.kind = LumenKind::crescent;
    p.major_diameter = diameter;
    p.crescent_depth = depth;
    p.crescent_extent = extent_deg;
    p.crescent_center = center_deg;
    return p;
}

LumenProfile LumenProfile::indented(double diameter, double depth, double center_deg) {
    LumenProfile p;
    p.kind = LumenKind::indented;
    p.major_diameter = diameter;
    p.indent_depth = depth;
    p.indent_center = center_deg;
    return p;
}

double LumenProfile::wall_radius(double theta, double z) const {
    const double radius = 0.5 * major_diameter;
    double r = radius;
    switch (kind) {
    case LumenKind::circle: break;
    case LumenKind::ellipse: {
        const double a = radius, b = aspect_ratio * radius;
        const double phi = theta - deg2rad(rotation);
        r = a * b / std::hypot(b * std::cos(phi), a * std::sin(phi));
        break;
    }
    case LumenKind::crescent: r = std::min(radius, crescent_bite_radius(*this, theta)); break;
    case LumenKind::indented: {
        const double arc = radius * std::abs(wrap_angle(theta - deg2rad(indent_center)));
        r = radius - indent_depth * cosine_window(arc, indent_arc_halfwidth)
                         * cosine_window(std::abs(z), indent_axial_halfwidth);
        break;
    }
    }
    if (clamp_radius > 0.0) r = std::min(r, clamp_radius);
    return r;
}

double LumenProfile::max_radius() const {
    const double r = 0.5 * major_diameter;
    return clamp_radius > 0.0 ? std::min(r, clamp_radius) : r;
}

double LumenProfile::min_radius() const {
    double r = std::numeric_limits<double>::infinity();
    constexpr int n = 1440;
    for (int i = 0; i < n; ++i) r = std::min(r, wall_radius(kTwoPi * i / n, 0.0));
    return r;
}

void LumenProfile::validate(const CatheterSpec& catheter) const {
    if (!(major_diameter > 0.0)) throw ParameterError("lumen: major diameter must be positive");
    if (!(aspect_ratio > 0.0 && aspect_ratio <= 1.0))
        throw ParameterError("lumen: aspect ratio must lie in (0, 1]");
    if (kind == LumenKind::circle && aspect_ratio != 1.0)
        throw ParameterError("lumen: circle requires aspect ratio 1");
    if (kind == LumenKind::crescent) {
        if (!(crescent_depth > 0.0) || !(crescent_extent > 0.0 && crescent_extent < 360.0))
            throw ParameterError("lumen: invalid crescent parameters");
    }
    if (kind == LumenKind::indented && indent_depth < 0.0)
        throw ParameterError("lumen: indent depth must be non-negative");
    const double gap = min_radius() - catheter.shaft_radius();
    if (!(gap > kMinWallGap))
        throw GeometryError("lumen wall touches the catheter shaft (annulus gap " + std::to_string(gap) + " mm)");
}

// ---------------------------------------------------------------- MeshResolution

MeshResolution MeshResolution::for_size(double max_wall_radius, const CatheterSpec& catheter,
                                        double target_size) {
    if (!(target_size > 0.0)) throw ParameterError("target size must be positive");
    MeshResolution res;
    auto even = [](int n) { return n + (n % 2); };
    auto at_least = [](double x) { return static_cast<int>(std::ceil(x - 1e-9)); };
    const double gap = max_wall_radius - catheter.shaft_radius();
    const double mid_radius = 0.5 * (max_wall_radius + catheter.shaft_radius());
    const double pitch_arc = kTwoPi * mid_radius / catheter.electrodes_per_ring;
    res.electrode_segments = even(std::max(2, at_least(catheter.electrode_width / (target_size / 6.0))));
    res.gap_segments = even(std::max(2, at_least(pitch_arc / target_size)));
    res.radial_bands = std::max(4, at_least(1.5 * gap / target_size));

    const double length = catheter.shaft_length;
    const double density = integrate_density(catheter, -0.5 * length, 0.5 * length, res.axial_grading);
    const double fine = target_size / 2.5;
    const int min_layers = std::max(2, at_least(catheter.electrode_height / fine));
    res.axial_layers = std::max(static_cast<int>(std::lround(density / fine)),
                                catheter.ring_count * min_layers + 4);
    return res;
}

// ---------------------------------------------------------------- cross-section

double CrossSection::ring_radius(int ring, double wall) const {
    const double t = radial_fractions[ring];
    const double excess = wall - inner_radius - reference_gap;
    return inner_radius + t * reference_gap + t * t * excess;
}

double CrossSection::area() const {
    double a = 0.0;
    for (const auto& t : triangles) {
        const Eigen::Vector2d u = points[t[1]] - points[t[0]];
        const Eigen::Vector2d v = points[t[2]] - points[t[0]];
        a += 0.5 * (u.x() * v.y() - u.y() * v.x());
    }
    return std::abs(a);
}

CrossSection build_cross_section(const LumenProfile& profile, const CatheterSpec& catheter,
                                 double target_size) {
    catheter.validate();
    profile.validate(catheter);
    const double gap = profile.major_diameter - catheter.shaft_diameter;
    if (!(target_size > 0.0 && target_size < gap / 4.0))
        throw ParameterError("target size must be below a quarter of the annulus width");
    return build_cross_section(profile, catheter,
                               MeshResolution::for_size(profile.max_radius(), catheter, target_size));
}

CrossSection build_cross_section(const LumenProfile& profile, const CatheterSpec& catheter,
                                 const MeshResolution& res) {
    catheter.validate();
    profile.validate(catheter);
    if (res.electrode_segments < 1 || res.gap_segments < 1 || res.radial_bands < 1)
        throw ParameterError("mesh resolution counts must be positive");

    CrossSection cs;
    cs.profile = profile;
    cs.inner_radius = catheter.shaft_radius();
    cs.reference_gap = profile.min_radius() - cs.inner_radius;

    const int n_e = catheter.electrodes_per_ring;
    const double pitch = kTwoPi / n_e;
    const double half = 0.5 * catheter.electrode_width / cs.inner_radius;
    for (int k = 0; k < n_e; ++k) {
        const double c = k * pitch;
        for (int j = 0; j < res.electrode_segments; ++j)
            cs.angles.push_back(c - half + 2.0 * half * j / res.electrode_segments);
        for (int j = 0; j < res.gap_segments; ++j)
            cs.angles.push_back(c + half + (pitch - 2.0 * half) * j / res.gap_segments);
    }

    const int bands = res.radial_bands;
    const double q = bands > 1 ? std::pow(res.radial_grading, 1.0 / (bands - 1)) : 1.0;
    std::vector<double> widths(bands);
    double total = 0.0;
    for (int j = 0; j < bands; ++j) total += (widths[j] = std::pow(q, j));
    cs.radial_fractions.push_back(0.0);
    double acc = 0.0;
    for (int j = 0; j < bands; ++j) {
        acc += widths[j] / total;
        cs.radial_fractions.push_back(j + 1 == bands ? 1.0 : acc);
    }

    const int spokes = cs.spokes();
    for (int j = 0; j < cs.rings(); ++j) {
        for (double theta : cs.angles) {
            const double r = cs.ring_radius(j, profile.wall_radius(theta, 0.0));
            cs.points.emplace_back(r * std::cos(theta), r * std::sin(theta));
        }
    }

    auto id = [spokes](int ring, int spoke) { return ring * spokes + (spoke % spokes); };
    // Diagonals mirror about every electrode centre and gap centre, so the
    // triangulation shares the dihedral symmetry of the electrode layout.
    for (int j = 0; j < bands; ++j) {
        for (int i = 0; i < spokes; ++i) {
            const int a = id(j, i), b = id(j, i + 1), c = id(j + 1, i + 1), d = id(j + 1, i);
            const double t0 = cs.angles[i];
            const double t1 = i + 1 < spokes ? cs.angles[i + 1] : cs.angles[0] + kTwoPi;
            double phase = std::fmod(0.5 * (t0 + t1), pitch);
            if (phase < 0.0) phase += pitch;
            if (phase < 0.5 * pitch) {
                cs.triangles.push_back({a, b, c});
                cs.triangles.push_back({a, c, d});
            } else {
                cs.triangles.push_back({a, b, d});
                cs.triangles.push_back({b, c, d});
            }
        }
    }
    return cs;
}

// ---------------------------------------------------------------- extrusion

std::vector<double> axial_nodes(const CatheterSpec& cat, int axial_layers, double grading,
                                double slice_thickness) {
    cat.validate();
    const double half_len = 0.5 * cat.shaft_length;
    const double span = (cat.ring_count - 1) * cat.ring_spacing + cat.electrode_height;
    if (!(cat.shaft_length >= span + 2.0 * kAxialMargin))
        throw MeshingError("shaft length too short for the electrode rings");

    struct Segment { double a, b; bool electrode; };
    std::vector<double> breaks{-half_len, half_len};
    for (int r = 0; r < cat.ring_count; ++r) {
        breaks.push_back(cat.ring_z(r) - 0.5 * cat.electrode_height);
        breaks.push_back(cat.ring_z(r) + 0.5 * cat.electrode_height);
    }
    if (cat.ring_count == 2 && slice_thickness > 0.0) {
        const double inner_edge = 0.5 * (cat.ring_spacing - cat.electrode_height);
        if (!(0.5 * slice_thickness < inner_edge))
            throw MeshingError("mid slice overlaps the electrode rings");
        breaks.push_back(-0.5 * slice_thickness);
        breaks.push_back(0.5 * slice_thickness);
    }
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end(),
                             [](double x, double y) { return std::abs(x - y) < 1e-9; }),
                 breaks.end());

    std::vector<Segment> segs;
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        const double mid = 0.5 * (breaks[i] + breaks[i + 1]);
        bool electrode = false;
        for (int r = 0; r < cat.ring_count; ++r)
            electrode = electrode || std::abs(mid - cat.ring_z(r)) < 0.5 * cat.electrode_height;
        segs.push_back({breaks[i], breaks[i + 1], electrode});
    }

    std::vector<double> weight(segs.size());
    double total_weight = 0.0;
    int minimum = 0;
    for (std::size_t s = 0; s < segs.size(); ++s) {
        total_weight += (weight[s] = integrate_density(cat, segs[s].a, segs[s].b, grading));
        minimum += segs[s].electrode ? 2 : 1;
    }
    if (axial_layers < minimum)
        throw MeshingError("axial layer count " + std::to_string(axial_layers)
                           + " too coarse to resolve the electrode height (need >= "
                           + std::to_string(minimum) + ")");

    // Largest-remainder allocation with per-segment minimums.
    std::vector<int> count(segs.size());
    std::vector<double> frac(segs.size());
    int used = 0;
    for (std::size_t s = 0; s < segs.size(); ++s) {
        const double ideal = axial_layers * weight[s] / total_weight;
        count[s] = std::max(segs[s].electrode ? 2 : 1, static_cast<int>(std::floor(ideal)));
        frac[s] = ideal - count[s];
        used += count[s];
    }
    while (used > axial_layers) {
        std::size_t best = segs.size();
        for (std::size_t s = 0; s < segs.size(); ++s) {
            if (count[s] <= (segs[s].electrode ? 2 : 1)) continue;
            if (best == segs.size() || frac[s] < frac[best]) best = s;
        }
        --count[best];
        frac[best] += 1.0;
        --used;
    }
    while (used < axial_layers) {
        std::size_t best = 0;
        for (std::size_t s = 1; s < segs.size(); ++s)
            if (frac[s] > frac[best]) best = s;
        ++count[best];
        frac[best] -= 1.0;
        ++used;
    }

    std::vector<double> z{segs.front().a};
    for (std::size_t s = 0; s < segs.size(); ++s) {
        // Equidistribute the density over the segment.
        constexpr int samples = 256;
        std::vector<double> cum(samples + 1, 0.0);
        const double h = (segs[s].b - segs[s].a) / samples;
        for (int i = 1; i <= samples; ++i) {
            const double za = segs[s].a + (i - 1) * h, zb = za + h;
            cum[i] = cum[i - 1] + 0.5 * h * (axial_density(cat, za, grading) + axial_density(cat, zb, grading));
        }
        for (int k = 1; k < count[s]; ++k) {
            const double target = cum.back() * k / count[s];
            const auto it = std::lower_bound(cum.begin(), cum.end(), target);
            const auto i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(1, it - cum.begin()));
            const double t = (target - cum[i - 1]) / (cum[i] - cum[i - 1]);
            z.push_back(segs[s].a + (static_cast<double>(i - 1) + t) * h);
        }
        z.push_back(segs[s].b);
    }
    return z;
}

Mesh extrude_mesh(const CrossSection& cs, const CatheterSpec& catheter, int axial_layers,
                  double axial_grading, double slice_thickness) {
    const std::vector<double> zs = axial_nodes(catheter, axial_layers, axial_grading, slice_thickness);
    const int spokes = cs.spokes();
    const int rings = cs.rings();
    const int n2d = spokes * rings;

    Mesh mesh;
    mesh.profile = cs.profile;
    mesh.catheter = catheter;
    mesh.slice_thickness = slice_thickness;

    mesh.nodes.reserve(zs.size() * n2d);
    for (double z : zs) {
        for (int j = 0; j < rings; ++j) {
            for (int i = 0; i < spokes; ++i) {
                const double theta = cs.angles[i];
                const double wall = cs.profile.wall_radius(theta, z);
                const double r = cs.ring_radius(j, wall);
                mesh.nodes.emplace_back(r * std::cos(theta), r * std::sin(theta), z);
            }
        }
    }

    const auto precedes = [spokes](int u, int v) {
        const int ru = u / spokes, rv = v / spokes;
        if (ru != rv) return ru < rv;
        return (u % spokes + 1) % spokes == v % spokes;
    };
    std::vector<std::array<int, 3>> ordered;
    ordered.reserve(cs.triangles.size());
    for (const auto& t : cs.triangles) ordered.push_back(sort_by_precedence(t, precedes));

    const int layers = static_cast<int>(zs.size()) - 1;
    mesh.elements.reserve(static_cast<std::size_t>(layers) * ordered.size() * 3);
    for (int k = 0; k < layers; ++k)
        for (const auto& t : ordered) split_prism(t, k * n2d, (k + 1) * n2d, mesh.elements);
    orient_positive(mesh);

    mesh.element_region.resize(mesh.elements.size(), kRegionBulk);
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
        if (std::abs(mesh.element_centroid(e).z()) < 0.5 * slice_thickness)
            mesh.element_region[e] = kRegionMidSlice;
    }

    // Electrode patches on the shaft surface (ring 0 of the cross-section).
    const int n_e = catheter.electrodes_per_ring;
    const double pitch = kTwoPi / n_e;
    const double half = 0.5 * catheter.electrode_width / cs.inner_radius;
    mesh.electrodes.assign(catheter.electrode_count(), {});
    for (int i = 0; i < spokes; ++i) {
        const double a0 = cs.angles[i];
        const double a1 = i + 1 < spokes ? cs.angles[i + 1] : cs.angles[0] + kTwoPi;
        const double mid = 0.5 * (a0 + a1);
        const int k = static_cast<int>(std::lround(mid / pitch)) % n_e;
        const int kk = (k + n_e) % n_e;
        if (std::abs(wrap_angle(mid - kk * pitch)) >= half) continue;
        for (int layer = 0; layer < layers; ++layer) {
            const double zmid = 0.5 * (zs[layer] + zs[layer + 1]);
            for (int ring = 0; ring < catheter.ring_count; ++ring) {
                if (std::abs(zmid - catheter.ring_z(ring)) >= 0.5 * catheter.electrode_height) continue;
                const int b0 = layer * n2d + i, b1 = layer * n2d + (i + 1) % spokes;
                const int t0 = b0 + n2d, t1 = b1 + n2d;
                auto& faces = mesh.electrodes[ring * n_e + kk];
                faces.push_back({b0, b1, t1});
                faces.push_back({b0, t1, t0});
            }
        }
    }
    for (std::size_t e = 0; e < mesh.electrodes.size(); ++e) {
        if (mesh.electrodes[e].empty())
            throw MeshingError("electrode " + std::to_string(e + 1) + " received no faces");
    }

    double size = 0.0;
    for (std::size_t i = 0; i + 1 < zs.size(); ++i) size = std::max(size, zs[i + 1] - zs[i]);
    mesh.characteristic_size = size;
    return mesh;
}

Mesh build_phantom_mesh(const LumenProfile& profile, const CatheterSpec& catheter,
                        const MeshResolution& res) {
    const CrossSection cs = build_cross_section(profile, catheter, res);
    return extrude_mesh(cs, catheter, res.axial_layers, res.axial_grading, res.slice_thickness);
}

Mesh build_phantom_mesh(const LumenProfile& profile, const CatheterSpec& catheter, double target_size) {
    return build_phantom_mesh(profile, catheter,
                              MeshResolution::for_size(profile.max_radius(), catheter, target_size));
}

Mesh build_end_cap_cylinder(double radius, double length, int spokes, int rings, int layers) {
    if (!(radius > 0.0 && length > 0.0) || spokes < 3 || rings < 1 || layers < 1)
        throw ParameterError("invalid cylinder parameters");
    // Local ids: 0 is the axis, 1 + (ring - 1) * spokes + spoke otherwise.
    std::vector<Eigen::Vector2d> pts{{0.0, 0.0}};
    for (int j = 1; j <= rings; ++j) {
        const double r = radius * j / rings;
        for (int i = 0; i < spokes; ++i) {
            const double a = kTwoPi * i / spokes;
            pts.emplace_back(r * std::cos(a), r * std::sin(a));
        }
    }
    auto id = [spokes](int ring, int spoke) { return ring == 0 ? 0 : 1 + (ring - 1) * spokes + spoke % spokes; };
    std::vector<std::array<int, 3>> tris;
    for (int i = 0; i < spokes; ++i) tris.push_back({0, id(1, i), id(1, i + 1)});
    for (int j = 1; j < rings; ++j) {
        for (int i = 0; i < spokes; ++i) {
            tris.push_back({id(j, i), id(j, i + 1), id(j + 1, i + 1)});
            tris.push_back({id(j, i), id(j + 1, i + 1), id(j + 1, i)});
        }
    }
    const int n2d = static_cast<int>(pts.size());
    const auto precedes = [spokes](int u, int v) {
        const int ru = u == 0 ? 0 : 1 + (u - 1) / spokes;
        const int rv = v == 0 ? 0 : 1 + (v - 1) / spokes;
        if (ru != rv) return ru < rv;
        return ((u - 1) % spokes + 1) % spokes == (v - 1) % spokes;
    };

    Mesh mesh;
    for (int k = 0; k <= layers; ++k) {
        const double z = length * k / layers;
        for (const auto& p : pts) mesh.nodes.emplace_back(p.x(), p.y(), z);
    }
    for (int k = 0; k < layers; ++k)
        for (const auto& t : tris) split_prism(sort_by_precedence(t, precedes), k * n2d, (k + 1) * n2d, mesh.elements);
    orient_positive(mesh);
    mesh.element_region.assign(mesh.elements.size(), kRegionBulk);
    mesh.electrodes.resize(2);
    for (const auto& t : tris) {
        mesh.electrodes[0].push_back({t[0], t[1], t[2]});
        mesh.electrodes[1].push_back({t[0] + layers * n2d, t[1] + layers * n2d, t[2] + layers * n2d});
    }
    mesh.characteristic_size = length / layers;
    mesh.slice_thickness = 0.0;
    return mesh;
}

// ---------------------------------------------------------------- Mesh

double Mesh::element_volume(std::size_t e) const {
    const auto& t = elements[e];
    return signed_volume(nodes[t[0]], nodes[t[1]], nodes[t[2]], nodes[t[3]]);
}

Eigen::Vector3d Mesh::element_centroid(std::size_t e) const {
    const auto& t = elements[e];
    return 0.25 * (nodes[t[0]] + nodes[t[1]] + nodes[t[2]] + nodes[t[3]]);
}

double Mesh::electrode_area(std::size_t electrode) const {
    double a = 0.0;
    for (const auto& f : electrodes[electrode]) a += triangle_area(nodes[f[0]], nodes[f[1]], nodes[f[2]]);
    return a;
}

double Mesh::total_volume() const {
    double v = 0.0;
    for (std::size_t e = 0; e < elements.size(); ++e) v += element_volume(e);
    return v;
}

double Mesh::wall_radius_at(double theta, double z) const {
    if (profile) return profile->wall_radius(theta, z);
    double r = 0.0;
    for (const auto& p : nodes) {
        if (std::abs(wrap_angle(std::atan2(p.y(), p.x()) - theta)) < deg2rad(5.0))
            r = std::max(r, std::hypot(p.x(), p.y()));
    }
    return r;
}

// ---------------------------------------------------------------- quality

double tetra_aspect_ratio(const Mesh& mesh, std::size_t e) {
    const auto& t = mesh.elements[e];
    const Eigen::Vector3d& a = mesh.nodes[t[0]];
    const Eigen::Vector3d& b = mesh.nodes[t[1]];
    const Eigen::Vector3d& c = mesh.nodes[t[2]];
    const Eigen::Vector3d& d = mesh.nodes[t[3]];
    const double vol = signed_volume(a, b, c, d);
    if (!(vol > 0.0)) return std::numeric_limits<double>::infinity();
    const double surface = triangle_area(a, b, c) + triangle_area(a, b, d) + triangle_area(a, c, d)
                           + triangle_area(b, c, d);
    const double inradius = 3.0 * vol / surface;
    const double longest = std::max({(a - b).norm(), (a - c).norm(), (a - d).norm(), (b - c).norm(),
                                     (b - d).norm(), (c - d).norm()});
    return longest / (2.0 * std::sqrt(6.0) * inradius);
}

QualityReport mesh_quality(const Mesh& mesh, double aspect_ratio_bound) {
    QualityReport rep;
    rep.element_count = mesh.elements.size();
    rep.aspect_ratio_bound = aspect_ratio_bound;
    rep.aspect_bin_edges = {1.0, 1.5, 2.0, 3.0, 5.0, 10.0, 20.0, 50.0, 100.0};
    rep.aspect_histogram.assign(rep.aspect_bin_edges.size(), 0);
    if (mesh.elements.empty()) return rep;

    rep.min_dihedral_deg = 180.0;
    rep.max_dihedral_deg = 0.0;
    static constexpr int edges[6][4] = {{0, 1, 2, 3}, {0, 2, 1, 3}, {0, 3, 1, 2},
                                        {1, 2, 0, 3}, {1, 3, 0, 2}, {2, 3, 0, 1}};
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
        const auto& t = mesh.elements[e];
        const double vol = mesh.element_volume(e);
        rep.volume_sum += vol;
        rep.abs_volume_sum += std::abs(vol);
        if (!(vol > 0.0)) rep.inverted.push_back(e);

        for (const auto& ed : edges) {
            const Eigen::Vector3d& p0 = mesh.nodes[t[ed[0]]];
            const Eigen::Vector3d axis = mesh.nodes[t[ed[1]]] - p0;
            const Eigen::Vector3d n1 = axis.cross(mesh.nodes[t[ed[2]]] - p0);
            const Eigen::Vector3d n2 = axis.cross(mesh.nodes[t[ed[3]]] - p0);
            const double denom = n1.norm() * n2.norm();
            if (denom <= 0.0) {
                rep.min_dihedral_deg = 0.0;
                continue;
            }
            const double ang = std::acos(std::clamp(n1.dot(n2) / denom, -1.0, 1.0)) * 180.0 / kPi;
            rep.min_dihedral_deg = std::min(rep.min_dihedral_deg, ang);
            rep.max_dihedral_deg = std::max(rep.max_dihedral_deg, ang);
        }

        const double ar = tetra_aspect_ratio(mesh, e);
        std::size_t bin = 0;
        while (bin + 1 < rep.aspect_bin_edges.size() && ar >= rep.aspect_bin_edges[bin + 1]) ++bin;
        ++rep.aspect_histogram[bin];
        if (ar > aspect_ratio_bound) rep.flagged.push_back(e);
    }
    return rep;
}

} // namespace lumeneit
