#include "lumeneit/fem.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include <Eigen/Geometry>
#include <Eigen/CholmodSupport>
#include <Eigen/IterativeLinearSolvers>

#include "lumeneit/error.hpp"

namespace lumeneit {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

int pair_index(std::vector<ElectrodePair>& pairs, ElectrodePair p) {
    const auto it = std::find(pairs.begin(), pairs.end(), p);
    if (it != pairs.end()) return static_cast<int>(it - pairs.begin());
    pairs.push_back(p);
    return static_cast<int>(pairs.size() - 1);
}

ElectrodePair to_pair(int pos_1based, int neg_1based) { return {pos_1based - 1, neg_1based - 1}; }

void check_pairs(std::span<const ElectrodePair> pairs, std::size_t electrodes) {
    for (const auto& p : pairs) {
        if (p.positive < 0 || p.negative < 0 || static_cast<std::size_t>(p.positive) >= electrodes
            || static_cast<std::size_t>(p.negative) >= electrodes || p.positive == p.negative)
            throw InputError("electrode pair (" + std::to_string(p.positive + 1) + ", "
                             + std::to_string(p.negative + 1) + ") is not valid for this mesh");
    }
}

} // namespace

// ------------------------------------------------------------------ ConductivityField

ConductivityField ConductivityField::uniform(std::size_t elements, double value) {
    return ConductivityField{std::vector<double>(elements, value)};
}

void ConductivityField::validate(std::size_t elements) const {
    if (sigma.size() != elements)
        throw ParameterError("conductivity has " + std::to_string(sigma.size()) + " values for "
                             + std::to_string(elements) + " elements");
    for (double s : sigma) {
        if (!(s > 0.0) || !std::isfinite(s)) throw ParameterError("conductivity values must be positive");
    }
}

// ------------------------------------------------------------------ FemModel

FemModel::FemModel(const Mesh& mesh)
    : node_count_(mesh.nodes.size()),
      elements_(mesh.elements),
      geometry_(kernels::parallel::element_geometry(mesh)),
      unit_stiffness_(kernels::parallel::unit_stiffness(geometry_)) {
    for (std::size_t e = 0; e < geometry_.volume.size(); ++e) {
        if (!(geometry_.volume[e] > 0.0))
            throw GeometryError("element " + std::to_string(e) + " has non-positive volume");
    }
    if (mesh.electrodes.empty()) throw GeometryError("mesh has no electrodes");
    electrode_faces_.resize(mesh.electrodes.size());
    electrode_area_.assign(mesh.electrodes.size(), 0.0);
    for (std::size_t l = 0; l < mesh.electrodes.size(); ++l) {
        if (mesh.electrodes[l].empty()) throw GeometryError("electrode " + std::to_string(l + 1) + " has no faces");
        for (const auto& f : mesh.electrodes[l]) {
            const Eigen::Vector3d a = mesh.nodes[f[0]] * kernels::kMillimetre;
            const Eigen::Vector3d b = mesh.nodes[f[1]] * kernels::kMillimetre;
            const Eigen::Vector3d c = mesh.nodes[f[2]] * kernels::kMillimetre;
            const double area = 0.5 * (b - a).cross(c - a).norm();
            electrode_faces_[l].push_back({f, area});
            electrode_area_[l] += area;
        }
    }
}

SparseMatrix FemModel::system_matrix(std::span<const double> sigma, double z) const {
    if (!(z > 0.0)) throw ParameterError("contact impedance must be positive");
    ConductivityField{std::vector<double>(sigma.begin(), sigma.end())}.validate(elements_.size());

    const auto n = static_cast<int>(node_count_);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(elements_.size() * 16 + electrode_count() * 64);
    for (std::size_t e = 0; e < elements_.size(); ++e) {
        const auto& t = elements_[e];
        const auto& k = unit_stiffness_[e];
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) trip.emplace_back(t[i], t[j], sigma[e] * k[4 * i + j]);
    }
    for (std::size_t l = 0; l < electrode_faces_.size(); ++l) {
        const int row = n + static_cast<int>(l);
        for (const auto& f : electrode_faces_[l]) {
            const double w = f.area / z;
            for (int i = 0; i < 3; ++i) {
                for (int j = 0; j < 3; ++j) trip.emplace_back(f.nodes[i], f.nodes[j], w * (i == j ? 2.0 : 1.0) / 12.0);
                trip.emplace_back(f.nodes[i], row, -w / 3.0);
                trip.emplace_back(row, f.nodes[i], -w / 3.0);
            }
            trip.emplace_back(row, row, w);
        }
    }
    SparseMatrix a(n + static_cast<int>(electrode_count()), n + static_cast<int>(electrode_count()));
    a.setFromTriplets(trip.begin(), trip.end());
    return a;
}

Eigen::VectorXd FemModel::electrode_currents(const Eigen::VectorXd& u, const Eigen::VectorXd& U, double z) const {
    Eigen::VectorXd current = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(electrode_count()));
    for (std::size_t l = 0; l < electrode_faces_.size(); ++l) {
        for (const auto& f : electrode_faces_[l]) {
            const double mean_u = (u[f.nodes[0]] + u[f.nodes[1]] + u[f.nodes[2]]) / 3.0;
            current[static_cast<Eigen::Index>(l)] += f.area * (U[static_cast<Eigen::Index>(l)] - mean_u) / z;
        }
    }
    return current;
}

SparseMatrix assemble_system(const FemModel& model, const ConductivityField& sigma, double contact_impedance) {
    return model.system_matrix(sigma.sigma, contact_impedance);
}

// ------------------------------------------------------------------ ForwardSolver

struct ForwardSolver::Impl {
    SparseMatrix grounded;
    std::unique_ptr<Eigen::CholmodSupernodalLLT<SparseMatrix, Eigen::Lower>> direct;
};

ForwardSolver::ForwardSolver(const FemModel& model, const ConductivityField& sigma, ForwardOptions options)
    : model_(&model), options_(options), impl_(std::make_unique<Impl>()) {
    SparseMatrix a = model.system_matrix(sigma.sigma, options.contact_impedance);
    const auto n = static_cast<int>(model.node_count());
    const auto L = static_cast<int>(model.electrode_count());
    double scale = 0.0;
    for (int l = 0; l < L; ++l) scale += a.coeff(n + l, n + l);
    scale /= L * L;
    std::vector<Eigen::Triplet<double>> ground;
    for (int i = 0; i < L; ++i)
        for (int j = 0; j < L; ++j) ground.emplace_back(n + i, n + j, scale);
    SparseMatrix g(a.rows(), a.cols());
    g.setFromTriplets(ground.begin(), ground.end());
    impl_->grounded = a + g;

    if (model.unknowns() <= options.direct_limit) {
        impl_->direct = std::make_unique<Eigen::CholmodSupernodalLLT<SparseMatrix, Eigen::Lower>>();
        impl_->direct->compute(impl_->grounded);
        if (impl_->direct->info() != Eigen::Success)
            throw NumericError("sparse Cholesky factorisation failed: system is not positive definite");
    }
}

ForwardSolver::~ForwardSolver() = default;
ForwardSolver::ForwardSolver(ForwardSolver&&) noexcept = default;
ForwardSolver& ForwardSolver::operator=(ForwardSolver&&) noexcept = default;

bool ForwardSolver::uses_direct_solver() const { return impl_->direct != nullptr; }

ForwardSolution ForwardSolver::solve(std::span<const ElectrodePair> injections, double amplitude) const {
    if (!(amplitude > 0.0)) throw ParameterError("current amplitude must be positive");
    check_pairs(injections, model_->electrode_count());
    const auto n = static_cast<Eigen::Index>(model_->node_count());
    const auto L = static_cast<Eigen::Index>(model_->electrode_count());
    const auto m = static_cast<Eigen::Index>(injections.size());

    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + L, m);
    for (Eigen::Index k = 0; k < m; ++k) {
        rhs(n + injections[k].positive, k) = amplitude;
        rhs(n + injections[k].negative, k) = -amplitude;
    }

    Eigen::MatrixXd x(n + L, m);
    if (impl_->direct) {
        x = impl_->direct->solve(rhs);
    } else {
        Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper, Eigen::DiagonalPreconditioner<double>> cg;
        cg.setTolerance(options_.cg_tolerance);
        cg.setMaxIterations(options_.cg_max_iterations);
        cg.compute(impl_->grounded);
        for (Eigen::Index k = 0; k < m; ++k) {
            x.col(k) = cg.solve(rhs.col(k));
            if (cg.info() != Eigen::Success)
                throw NumericError("conjugate gradient did not converge (relative residual "
                                       + std::to_string(cg.error()) + ")",
                                   cg.error());
        }
    }

    const double residual = (impl_->grounded * x - rhs).norm() / std::max(rhs.norm(), 1e-300);
    if (!(residual < 1e-6))
        throw NumericError("forward solve residual " + std::to_string(residual) + " too large", residual);

    ForwardSolution sol;
    sol.node_potentials = x.topRows(n);
    sol.electrode_potentials = x.bottomRows(L);
    sol.injections.assign(injections.begin(), injections.end());
    sol.injected_current = amplitude;
    return sol;
}

// ------------------------------------------------------------------ protocol helpers

std::vector<ElectrodePair> injection_pairs(const Protocol& protocol) {
    std::vector<ElectrodePair> out;
    for (const auto& r : protocol.rows) pair_index(out, to_pair(r.inject_pos, r.inject_neg));
    return out;
}

std::vector<ElectrodePair> measurement_pairs(const Protocol& protocol) {
    std::vector<ElectrodePair> out;
    for (const auto& r : protocol.rows) pair_index(out, to_pair(r.meas_pos, r.meas_neg));
    return out;
}

Frame frame_from_solution(const ForwardSolution& sol, const Protocol& protocol) {
    Frame f;
    f.protocol = protocol.name;
    f.current_amplitude = sol.injected_current;
    f.voltages.reserve(protocol.rows.size());
    for (const auto& r : protocol.rows) {
        const ElectrodePair inj = to_pair(r.inject_pos, r.inject_neg);
        const auto it = std::find(sol.injections.begin(), sol.injections.end(), inj);
        if (it == sol.injections.end()) throw InputError("solution lacks an injection used by the protocol");
        const auto k = static_cast<Eigen::Index>(it - sol.injections.begin());
        f.voltages.push_back(sol.electrode_potentials(r.meas_pos - 1, k) - sol.electrode_potentials(r.meas_neg - 1, k));
    }
    return f;
}

Frame solve_forward(const FemModel& model, const ConductivityField& sigma, const Protocol& protocol,
                    double amplitude, const ForwardOptions& options) {
    const auto pairs = injection_pairs(protocol);
    check_pairs(measurement_pairs(protocol), model.electrode_count());
    const ForwardSolver solver(model, sigma, options);
    return frame_from_solution(solver.solve(pairs, amplitude), protocol);
}

Linearization linearize(const FemModel& model, const ConductivityField& sigma, const Protocol& protocol,
                        double amplitude, const ForwardOptions& options) {
    if (!(amplitude > 0.0)) throw ParameterError("current amplitude must be positive");
    std::vector<ElectrodePair> pairs;
    std::vector<int> field_inj, field_meas;
    for (const auto& r : protocol.rows) {
        field_inj.push_back(pair_index(pairs, to_pair(r.inject_pos, r.inject_neg)));
        field_meas.push_back(pair_index(pairs, to_pair(r.meas_pos, r.meas_neg)));
    }
    const ForwardSolver solver(model, sigma, options);
    const ForwardSolution unit = solver.solve(pairs, 1.0);

    Linearization lin;
    lin.frame.protocol = protocol.name;
    lin.frame.current_amplitude = amplitude;
    for (std::size_t m = 0; m < protocol.rows.size(); ++m) {
        const auto& r = protocol.rows[m];
        const auto k = static_cast<Eigen::Index>(field_inj[m]);
        lin.frame.voltages.push_back(amplitude * (unit.electrode_potentials(r.meas_pos - 1, k)
                                                  - unit.electrode_potentials(r.meas_neg - 1, k)));
    }
    const auto grads = kernels::parallel::field_gradients(model.elements(), model.geometry(), unit.node_potentials);
    kernels::parallel::sensitivity(model.geometry(), grads, field_inj, field_meas, amplitude, lin.jacobian.entries);
    return lin;
}

SensitivityMatrix compute_sensitivity(const FemModel& model, const ConductivityField& sigma,
                                      const Protocol& protocol, double amplitude, const ForwardOptions& options) {
    return linearize(model, sigma, protocol, amplitude, options).jacobian;
}

std::vector<double> current_density(const FemModel& model, const ConductivityField& sigma, ElectrodePair injection,
                                    double amplitude, const ForwardOptions& options) {
    const ForwardSolver solver(model, sigma, options);
    const std::array<ElectrodePair, 1> pairs{injection};
    const ForwardSolution sol = solver.solve(pairs, amplitude);
    const auto grads = kernels::parallel::field_gradients(model.elements(), model.geometry(), sol.node_potentials);
    return kernels::parallel::current_density(model.geometry(), grads, 0, sigma.sigma);
}

// ------------------------------------------------------------------ slice metrics

std::vector<std::size_t> slice_elements(const Mesh& mesh, double center, double thickness) {
    std::vector<std::size_t> out;
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
        if (std::abs(mesh.element_centroid(e).z() - center) < 0.5 * thickness) out.push_back(e);
    }
    return out;
}

double minimal_angular_window(std::vector<double> az, double coverage) {
    if (az.empty()) return 0.0;
    for (double& a : az) {
        a = std::fmod(a, kTwoPi);
        if (a < 0.0) a += kTwoPi;
    }
    std::sort(az.begin(), az.end());
    const std::size_t n = az.size();
    const auto k = static_cast<std::size_t>(std::ceil(coverage * static_cast<double>(n) - 1e-9));
    if (k <= 1) return 0.0;
    if (k >= n + 1) return 360.0;
    double best = kTwoPi;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i + k - 1;
        const double end = j < n ? az[j] : az[j - n] + kTwoPi;
        best = std::min(best, end - az[i]);
    }
    return std::min(360.0, best * 180.0 / std::numbers::pi);
}

SliceMetrics slice_metrics(std::span<const double> cd, const Eigen::MatrixXd& rows, const Mesh& mesh,
                           const SliceOptions& opt) {
    if (cd.size() != mesh.elements.size()) throw InputError("current density length does not match the mesh");
    if (rows.rows() > 0 && static_cast<std::size_t>(rows.cols()) != mesh.elements.size())
        throw InputError("sensitivity rows do not match the mesh");
    const auto slice = slice_elements(mesh, opt.slice_center, opt.slice_thickness);
    if (slice.empty()) throw GeometryError("mid slice contains no elements");

    SliceMetrics out;
    out.slice_elements = slice.size();
    double peak = 0.0;
    if (opt.global_maximum) {
        peak = *std::max_element(cd.begin(), cd.end());
    } else {
        for (auto e : slice) peak = std::max(peak, cd[e]);
    }
    std::vector<double> az;
    for (auto e : slice) {
        if (cd[e] >= opt.threshold_fraction * peak) {
            const Eigen::Vector3d c = mesh.element_centroid(e);
            az.push_back(std::atan2(c.y(), c.x()));
        }
    }
    out.qualifying_elements = az.size();
    out.cd_theta = minimal_angular_window(az, opt.coverage);

    std::vector<std::size_t> outer;
    for (auto e : slice) {
        const Eigen::Vector3d c = mesh.element_centroid(e);
        const double theta = std::atan2(c.y(), c.x());
        if (std::hypot(c.x(), c.y()) > opt.outer_fraction * mesh.wall_radius_at(theta, c.z())) outer.push_back(e);
    }
    out.outer_elements = outer.size();
    out.j_wall.assign(static_cast<std::size_t>(rows.rows()), 0.0);
    // Sensitivities are volume integrals, so raw maxima favour the larger
    // elements. Compare per unit volume, rescaled by the mean outer volume.
    double mean_volume = 0.0;
    for (auto e : outer) mean_volume += mesh.element_volume(e);
    if (!outer.empty()) mean_volume /= static_cast<double>(outer.size());
    for (Eigen::Index m = 0; m < rows.rows(); ++m) {
        double best = 0.0;
        for (auto e : outer) {
            const double v = std::abs(rows(m, static_cast<Eigen::Index>(e)));
            best = std::max(best, opt.per_unit_volume ? v * mean_volume / mesh.element_volume(e) : v);
        }
        out.j_wall[static_cast<std::size_t>(m)] = best;
    }
    return out;
}

} // namespace lumeneit
