#pragma once

#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "lumeneit/geometry.hpp"
#include "lumeneit/kernels.hpp"
#include "lumeneit/protocol.hpp"

namespace lumeneit {

using SparseMatrix = Eigen::SparseMatrix<double>;

inline constexpr double kSalineConductivity = 1.6;    // S/m
inline constexpr double kCurrentAmplitude = 141e-6;   // A
inline constexpr double kContactImpedance = 1e-3;     // Ohm m^2

/// Per-element conductivity, S/m.
struct ConductivityField {
    std::vector<double> sigma;

    static ConductivityField uniform(std::size_t elements, double value = kSalineConductivity);
    /// Throws ParameterError unless all values are positive and the length matches.
    void validate(std::size_t elements) const;
};

struct ForwardOptions {
    double contact_impedance = kContactImpedance; // Ohm m^2
    std::size_t direct_limit = 400000;            // unknowns solved by sparse Cholesky
    double cg_tolerance = 1e-10;
    int cg_max_iterations = 50000;
};

/// Electrode pair, 0-based indices. Current enters `positive` and leaves `negative`.
struct ElectrodePair {
    int positive = 0;
    int negative = 0;
    friend bool operator==(const ElectrodePair&, const ElectrodePair&) = default;
    friend auto operator<=>(const ElectrodePair&, const ElectrodePair&) = default;
};

/// Mesh-dependent data of the complete electrode model: element geometry and
/// electrode boundary integrals, all in SI units.
class FemModel {
public:
    explicit FemModel(const Mesh& mesh);

    std::size_t node_count() const { return node_count_; }
    std::size_t element_count() const { return elements_.size(); }
    std::size_t electrode_count() const { return electrode_faces_.size(); }
    std::size_t unknowns() const { return node_count_ + electrode_count(); }

    const std::vector<Tetra>& elements() const { return elements_; }
    const kernels::ElementGeometry& geometry() const { return geometry_; }
    double electrode_area(std::size_t electrode) const { return electrode_area_[electrode]; } // m^2

    /// Complete electrode model matrix (not grounded): symmetric positive
    /// semidefinite with the constant vector as its null space.
    SparseMatrix system_matrix(std::span<const double> sigma, double contact_impedance) const;

    /// Net current (A) through each electrode for a solution column.
    Eigen::VectorXd electrode_currents(const Eigen::VectorXd& node_potential,
                                       const Eigen::VectorXd& electrode_potential,
                                       double contact_impedance) const;

private:
    struct FaceIntegral {
        std::array<int, 3> nodes;
        double area; // m^2
    };
    std::size_t node_count_ = 0;
    std::vector<Tetra> elements_;
    kernels::ElementGeometry geometry_;
    kernels::LocalMatrices unit_stiffness_;
    std::vector<std::vector<FaceIntegral>> electrode_faces_;
    std::vector<double> electrode_area_;
};

/// Alias matching the operation name used across the toolkit.
SparseMatrix assemble_system(const FemModel& model, const ConductivityField& sigma, double contact_impedance);

struct ForwardSolution {
    Eigen::MatrixXd node_potentials;      // V, nodes x injections
    Eigen::MatrixXd electrode_potentials; // V, electrodes x injections (zero mean per column)
    std::vector<ElectrodePair> injections;
    double injected_current = 0.0;        // A
};

/// Factorised grounded system for one conductivity. Grounding adds a rank-one
/// term that pins the mean electrode potential to zero.
class ForwardSolver {
public:
    ForwardSolver(const FemModel& model, const ConductivityField& sigma, ForwardOptions options = {});
    ~ForwardSolver();
    ForwardSolver(ForwardSolver&&) noexcept;
    ForwardSolver& operator=(ForwardSolver&&) noexcept;

    ForwardSolution solve(std::span<const ElectrodePair> injections, double amplitude) const;
    const FemModel& model() const { return *model_; }
    const ForwardOptions& options() const { return options_; }
    bool uses_direct_solver() const;

private:
    struct Impl;
    const FemModel* model_;
    ForwardOptions options_;
    std::unique_ptr<Impl> impl_;
};

/// Protocol helpers.
std::vector<ElectrodePair> injection_pairs(const Protocol& protocol);
std::vector<ElectrodePair> measurement_pairs(const Protocol& protocol);

Frame solve_forward(const FemModel& model, const ConductivityField& sigma, const Protocol& protocol,
                    double amplitude = kCurrentAmplitude, const ForwardOptions& options = {});
Frame frame_from_solution(const ForwardSolution& solution, const Protocol& protocol);

/// d(voltage)/d(sigma_e), V m / S; rows follow the protocol, columns the elements.
struct SensitivityMatrix {
    Eigen::MatrixXd entries;
    std::size_t rows() const { return static_cast<std::size_t>(entries.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(entries.cols()); }
};

struct Linearization {
    Frame frame;
    SensitivityMatrix jacobian;
};

/// Adjoint sensitivity: entry (m, e) = -amplitude * int_e grad(u_inj) . grad(u_meas) dV
/// where both fields are driven by unit current.
SensitivityMatrix compute_sensitivity(const FemModel& model, const ConductivityField& sigma,
                                      const Protocol& protocol, double amplitude = kCurrentAmplitude,
                                      const ForwardOptions& options = {});
Linearization linearize(const FemModel& model, const ConductivityField& sigma, const Protocol& protocol,
                        double amplitude = kCurrentAmplitude, const ForwardOptions& options = {});

/// |sigma grad u| per element (A/m^2) for one injection pair.
std::vector<double> current_density(const FemModel& model, const ConductivityField& sigma,
                                    ElectrodePair injection, double amplitude = kCurrentAmplitude,
                                    const ForwardOptions& options = {});

struct SliceOptions {
    double slice_thickness = 2.0;  // mm, centred between the rings
    double slice_center = 0.0;     // mm
    double outer_fraction = 0.9;   // outer elements: centroid radius > fraction * wall radius
    double threshold_fraction = 0.5;
    double coverage = 0.99;
    bool global_maximum = false;   // threshold against the whole-mesh maximum instead of the slice
    bool per_unit_volume = true;   // J_wall from |J_e| / V_e times the mean outer element volume
};

struct SliceMetrics {
    double cd_theta = 0.0;           // deg
    std::vector<double> j_wall;      // V m / S, one per supplied sensitivity row
    std::size_t slice_elements = 0;
    std::size_t qualifying_elements = 0;
    std::size_t outer_elements = 0;
};

/// Indices of elements whose centroid lies in the axial band.
std::vector<std::size_t> slice_elements(const Mesh& mesh, double center, double thickness);

/// Smallest contiguous azimuthal window (deg) containing `coverage` of the given azimuths (rad).
double minimal_angular_window(std::vector<double> azimuths, double coverage);

SliceMetrics slice_metrics(std::span<const double> current_density, const Eigen::MatrixXd& sensitivity_rows,
                           const Mesh& mesh, const SliceOptions& options = {});

} // namespace lumeneit
