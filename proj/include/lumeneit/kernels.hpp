#pragma once

// Element-level numerical kernels. Every kernel has a plain serial version kept
// as the reference, and an OpenMP version used by the solvers. Both must agree
// to rounding; tests/test_kernels.cpp checks this.

#include <array>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "lumeneit/geometry.hpp"

namespace lumeneit::kernels {

/// Per-element geometry in SI units (metres).
struct ElementGeometry {
    std::vector<double> volume;                             // m^3
    std::vector<std::array<Eigen::Vector3d, 4>> gradients;  // barycentric gradients, 1/m
};

/// Row-major per-element local stiffness values, 16 per element, for unit conductivity.
using LocalMatrices = std::vector<std::array<double, 16>>;

/// Per-element gradients of nodal fields, stored as (3 * elements) x fields.
using GradientField = Eigen::MatrixXd;

inline constexpr double kMillimetre = 1e-3;

namespace serial {

ElementGeometry element_geometry(const Mesh& mesh);
LocalMatrices unit_stiffness(const ElementGeometry& geom);
GradientField field_gradients(const std::vector<Tetra>& elements, const ElementGeometry& geom,
                              const Eigen::MatrixXd& node_fields);
/// out(row, e) = -scale * V_e * grad_a(e) . grad_b(e), with columns of `a` and
/// `b` selected per row.
void sensitivity(const ElementGeometry& geom, const GradientField& grads, std::span<const int> field_a,
                 std::span<const int> field_b, double scale, Eigen::MatrixXd& out);
std::vector<double> current_density(const ElementGeometry& geom, const GradientField& grads, int field,
                                    std::span<const double> sigma);
/// J * diag(weights) * J^T.
Eigen::MatrixXd weighted_gram(const Eigen::MatrixXd& J, const Eigen::VectorXd& weights);

} // namespace serial

namespace parallel {

ElementGeometry element_geometry(const Mesh& mesh);
LocalMatrices unit_stiffness(const ElementGeometry& geom);
GradientField field_gradients(const std::vector<Tetra>& elements, const ElementGeometry& geom,
                              const Eigen::MatrixXd& node_fields);
void sensitivity(const ElementGeometry& geom, const GradientField& grads, std::span<const int> field_a,
                 std::span<const int> field_b, double scale, Eigen::MatrixXd& out);
std::vector<double> current_density(const ElementGeometry& geom, const GradientField& grads, int field,
                                    std::span<const double> sigma);
Eigen::MatrixXd weighted_gram(const Eigen::MatrixXd& J, const Eigen::VectorXd& weights);

} // namespace parallel

/// Number of OpenMP threads available (1 when built without OpenMP).
int thread_count();

} // namespace lumeneit::kernels
