#include "lumeneit/kernels.hpp"

#include <cmath>

#include <Eigen/Dense>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lumeneit::kernels {

namespace {

void geometry_of(const Mesh& mesh, std::size_t e, double& volume, std::array<Eigen::Vector3d, 4>& grads) {
    const auto& t = mesh.elements[e];
    const Eigen::Vector3d p0 = mesh.nodes[t[0]] * kMillimetre;
    Eigen::Matrix3d m;
    m.col(0) = mesh.nodes[t[1]] * kMillimetre - p0;
    m.col(1) = mesh.nodes[t[2]] * kMillimetre - p0;
    m.col(2) = mesh.nodes[t[3]] * kMillimetre - p0;
    const double det = m.determinant();
    volume = det / 6.0;
    const Eigen::Matrix3d inv = m.inverse();
    grads[1] = inv.row(0).transpose();
    grads[2] = inv.row(1).transpose();
    grads[3] = inv.row(2).transpose();
    grads[0] = -(grads[1] + grads[2] + grads[3]);
}

void stiffness_of(const ElementGeometry& geom, std::size_t e, std::array<double, 16>& k) {
    const auto& g = geom.gradients[e];
    const double v = geom.volume[e];
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) k[4 * i + j] = v * g[i].dot(g[j]);
}

Eigen::Vector3d gradient_of(const std::vector<Tetra>& elements, const ElementGeometry& geom,
                            const Eigen::MatrixXd& fields, std::size_t e, Eigen::Index f) {
    const auto& t = elements[e];
    const auto& g = geom.gradients[e];
    return fields(t[0], f) * g[0] + fields(t[1], f) * g[1] + fields(t[2], f) * g[2] + fields(t[3], f) * g[3];
}

} // namespace

int thread_count() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

// ------------------------------------------------------------------ serial

namespace serial {

ElementGeometry element_geometry(const Mesh& mesh) {
    ElementGeometry geom;
    geom.volume.resize(mesh.elements.size());
    geom.gradients.resize(mesh.elements.size());
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) geometry_of(mesh, e, geom.volume[e], geom.gradients[e]);
    return geom;
}

LocalMatrices unit_stiffness(const ElementGeometry& geom) {
    LocalMatrices out(geom.volume.size());
    for (std::size_t e = 0; e < out.size(); ++e) stiffness_of(geom, e, out[e]);
    return out;
}

GradientField field_gradients(const std::vector<Tetra>& elements, const ElementGeometry& geom,
                              const Eigen::MatrixXd& node_fields) {
    const auto n = static_cast<Eigen::Index>(elements.size());
    GradientField out(3 * n, node_fields.cols());
    for (Eigen::Index f = 0; f < node_fields.cols(); ++f)
        for (Eigen::Index e = 0; e < n; ++e)
            out.block<3, 1>(3 * e, f) = gradient_of(elements, geom, node_fields, static_cast<std::size_t>(e), f);
    return out;
}

void sensitivity(const ElementGeometry& geom, const GradientField& grads, std::span<const int> field_a,
                 std::span<const int> field_b, double scale, Eigen::MatrixXd& out) {
    const auto rows = static_cast<Eigen::Index>(field_a.size());
    const auto n = static_cast<Eigen::Index>(geom.volume.size());
    out.resize(rows, n);
    for (Eigen::Index m = 0; m < rows; ++m) {
        for (Eigen::Index e = 0; e < n; ++e) {
            const double dot = grads.block<3, 1>(3 * e, field_a[m]).dot(grads.block<3, 1>(3 * e, field_b[m]));
            out(m, e) = -scale * geom.volume[e] * dot;
        }
    }
}

std::vector<double> current_density(const ElementGeometry& geom, const GradientField& grads, int field,
                                    std::span<const double> sigma) {
    std::vector<double> out(geom.volume.size());
    for (std::size_t e = 0; e < out.size(); ++e)
        out[e] = sigma[e] * grads.block<3, 1>(3 * static_cast<Eigen::Index>(e), field).norm();
    return out;
}

Eigen::MatrixXd weighted_gram(const Eigen::MatrixXd& J, const Eigen::VectorXd& weights) {
    const Eigen::Index m = J.rows();
    Eigen::MatrixXd out(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            double s = 0.0;
            for (Eigen::Index e = 0; e < J.cols(); ++e) s += J(i, e) * weights[e] * J(j, e);
            out(i, j) = out(j, i) = s;
        }
    }
    return out;
}

} // namespace serial

// ------------------------------------------------------------------ parallel

namespace parallel {

ElementGeometry element_geometry(const Mesh& mesh) {
    ElementGeometry geom;
    const auto n = static_cast<std::ptrdiff_t>(mesh.elements.size());
    geom.volume.resize(mesh.elements.size());
    geom.gradients.resize(mesh.elements.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t e = 0; e < n; ++e) {
        const auto i = static_cast<std::size_t>(e);
        geometry_of(mesh, i, geom.volume[i], geom.gradients[i]);
    }
    return geom;
}

LocalMatrices unit_stiffness(const ElementGeometry& geom) {
    LocalMatrices out(geom.volume.size());
    const auto n = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t e = 0; e < n; ++e) stiffness_of(geom, static_cast<std::size_t>(e), out[static_cast<std::size_t>(e)]);
    return out;
}

GradientField field_gradients(const std::vector<Tetra>& elements, const ElementGeometry& geom,
                              const Eigen::MatrixXd& node_fields) {
    const auto n = static_cast<Eigen::Index>(elements.size());
    const Eigen::Index nf = node_fields.cols();
    GradientField out(3 * n, nf);
#pragma omp parallel for schedule(static)
    for (Eigen::Index e = 0; e < n; ++e) {
        for (Eigen::Index f = 0; f < nf; ++f)
            out.block<3, 1>(3 * e, f) = gradient_of(elements, geom, node_fields, static_cast<std::size_t>(e), f);
    }
    return out;
}

void sensitivity(const ElementGeometry& geom, const GradientField& grads, std::span<const int> field_a,
                 std::span<const int> field_b, double scale, Eigen::MatrixXd& out) {
    const auto rows = static_cast<Eigen::Index>(field_a.size());
    const auto n = static_cast<Eigen::Index>(geom.volume.size());
    out.resize(rows, n);
#pragma omp parallel for schedule(static)
    for (Eigen::Index e = 0; e < n; ++e) {
        const double w = -scale * geom.volume[static_cast<std::size_t>(e)];
        for (Eigen::Index m = 0; m < rows; ++m)
            out(m, e) = w * grads.block<3, 1>(3 * e, field_a[m]).dot(grads.block<3, 1>(3 * e, field_b[m]));
    }
}

std::vector<double> current_density(const ElementGeometry& geom, const GradientField& grads, int field,
                                    std::span<const double> sigma) {
    std::vector<double> out(geom.volume.size());
    const auto n = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t e = 0; e < n; ++e) {
        const auto i = static_cast<std::size_t>(e);
        out[i] = sigma[i] * grads.block<3, 1>(3 * static_cast<Eigen::Index>(e), field).norm();
    }
    return out;
}

Eigen::MatrixXd weighted_gram(const Eigen::MatrixXd& J, const Eigen::VectorXd& weights) {
    const Eigen::Index m = J.rows();
    const Eigen::MatrixXd scaled = J * weights.asDiagonal();
    Eigen::MatrixXd out(m, m);
    // Each (i, j) entry is an independent dot product over elements.
#pragma omp parallel for schedule(dynamic)
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double s = scaled.row(i).dot(J.row(j));
            out(i, j) = s;
            out(j, i) = s;
        }
    }
    return out;
}

} // namespace parallel

} // namespace lumeneit::kernels
