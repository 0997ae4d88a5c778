#include "lumeneit/inverse.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "lumeneit/csv.hpp"
#include "lumeneit/error.hpp"
#include "lumeneit/mesh_io.hpp"

namespace lumeneit {

namespace {

Eigen::VectorXd to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// M = J diag(w) J^T
Eigen::MatrixXd gram(const Eigen::MatrixXd& J, const Eigen::VectorXd& w) {
    return kernels::parallel::weighted_gram(J, w);
}

// Minimiser of ||J d - r||^2 + mu (d + e)^T P (d + e), with P^-1 given as `pinv`.
Eigen::VectorXd solve_with_mu(const Eigen::MatrixXd& J, const Eigen::VectorXd& r, double mu,
                              const Eigen::VectorXd& pinv, const Eigen::VectorXd* offset) {
    if (mu == 0.0) {
        if (J.rows() < J.cols())
            throw ParameterError("unregularised solve needs at least as many measurements as unknowns");
        const Eigen::VectorXd rhs = offset ? Eigen::VectorXd(r + J * *offset) : r;
        Eigen::VectorXd d = J.colPivHouseholderQr().solve(rhs);
        if (offset) d -= *offset;
        return d;
    }
    Eigen::MatrixXd M = gram(J, pinv);
    M.diagonal().array() += mu;
    const Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() != Eigen::Success) throw NumericError("regularised normal matrix is not positive definite");
    const Eigen::VectorXd rhs = offset ? Eigen::VectorXd(r + J * *offset) : r;
    Eigen::VectorXd d = pinv.cwiseProduct(J.transpose() * llt.solve(rhs));
    if (offset) d -= *offset;
    return d;
}

double regularisation_scale(const Eigen::MatrixXd& J, const Eigen::VectorXd& pinv) {
    double tr = 0.0;
    for (Eigen::Index m = 0; m < J.rows(); ++m) tr += J.row(m).cwiseAbs2().dot(pinv.transpose());
    return tr / static_cast<double>(std::max<Eigen::Index>(1, J.rows()));
}

void check_frame(const Frame& f, const ReconMesh& rm, const char* what) {
    if (f.voltages.size() != rm.protocol().size())
        throw InputError(std::string(what) + " has " + std::to_string(f.voltages.size())
                         + " voltages; the reconstruction protocol has " + std::to_string(rm.protocol().size())
                         + " rows");
    if (!f.protocol.empty() && f.protocol != rm.protocol().name)
        throw InputError(std::string(what) + " protocol '" + f.protocol + "' does not match '" + rm.protocol().name
                         + "'");
}

double misfit(const Eigen::VectorXd& meas, const std::vector<double>& model) {
    return (meas - to_vector(model)).norm();
}

} // namespace

// ---------------------------------------------------------------- ReconMesh

MeshResolution ReconMeshOptions::default_resolution() {
    MeshResolution r;
    r.electrode_segments = 2;
    r.gap_segments = 2;
    r.radial_bands = 5;
    r.radial_grading = 4.0;
    r.axial_layers = 12;
    r.axial_grading = 3.0;
    r.slice_thickness = 2.0;
    return r;
}

ReconMesh ReconMesh::build(const ReconMeshOptions& opt, const Protocol& protocol) {
    return ReconMesh(build_phantom_mesh(LumenProfile::circle(opt.diameter), opt.catheter, opt.resolution), protocol,
                     opt.forward);
}

ReconMesh::ReconMesh(Mesh mesh, const Protocol& protocol, ForwardOptions forward)
    : mesh_(std::make_shared<const Mesh>(std::move(mesh))), protocol_(protocol), forward_(forward) {
    model_ = std::make_shared<const FemModel>(*mesh_);
    const Linearization lin = linearize(*model_, ConductivityField::uniform(mesh_->element_count()), protocol_,
                                        kCurrentAmplitude, forward_);
    jacobian_ = lin.jacobian.entries;
    homogeneous_ = lin.frame;

    std::set<std::array<int, 3>> faces;
    for (const auto& electrode : mesh_->electrodes) {
        for (auto f : electrode) {
            std::sort(f.begin(), f.end());
            faces.insert(f);
        }
    }
    for (std::size_t e = 0; e < mesh_->element_count(); ++e) {
        const auto& t = mesh_->elements[e];
        for (int skip = 0; skip < 4; ++skip) {
            std::array<int, 3> f{};
            int k = 0;
            for (int i = 0; i < 4; ++i)
                if (i != skip) f[k++] = t[i];
            std::sort(f.begin(), f.end());
            if (faces.count(f)) {
                electrode_elements_.push_back(e);
                break;
            }
        }
    }
}

std::string to_string(ReconMode m) {
    switch (m) {
    case ReconMode::absolute: return "absolute";
    case ReconMode::td: return "td";
    case ReconMode::ptd: return "ptd";
    }
    return "absolute";
}

ReconMode recon_mode_from_string(const std::string& s) {
    if (s == "absolute") return ReconMode::absolute;
    if (s == "td" || s == "TD") return ReconMode::td;
    if (s == "ptd" || s == "PTD") return ReconMode::ptd;
    throw InputError("unknown reconstruction mode '" + s + "'");
}

// ---------------------------------------------------------------- linear solves

Eigen::VectorXd regularised_solve(const Eigen::MatrixXd& J, const Eigen::VectorXd& r, double lambda,
                                  const Eigen::VectorXd* prior, const Eigen::VectorXd* offset) {
    if (!(lambda >= 0.0)) throw ParameterError("lambda must be non-negative");
    if (r.size() != J.rows()) throw InputError("data length does not match the sensitivity matrix");
    Eigen::VectorXd pinv = Eigen::VectorXd::Ones(J.cols());
    if (prior) {
        if (prior->size() != J.cols()) throw InputError("prior length does not match the sensitivity matrix");
        pinv = prior->cwiseInverse();
    }
    const double mu = lambda * lambda * regularisation_scale(J, pinv);
    return solve_with_mu(J, r, mu, pinv, offset);
}

// ---------------------------------------------------------------- absolute

Reconstruction reconstruct_absolute(const Frame& frame, const ReconMesh& rm, const AbsoluteOptions& opt) {
    check_frame(frame, rm, "frame");
    if (!(opt.lambda > 0.0)) throw ParameterError("absolute reconstruction needs lambda > 0");
    if (opt.max_iterations < 1) throw ParameterError("absolute reconstruction needs at least one iteration");
    const auto n = static_cast<Eigen::Index>(rm.element_count());
    const Eigen::VectorXd meas = to_vector(frame.voltages);
    const double amplitude = frame.current_amplitude > 0.0 ? frame.current_amplitude : kCurrentAmplitude;
    const double floor = 1e-4 * opt.initial_sigma;

    Eigen::VectorXd sigma = Eigen::VectorXd::Constant(n, opt.initial_sigma);
    const Eigen::VectorXd sigma0 = sigma;
    auto field = [](const Eigen::VectorXd& s) { return ConductivityField{std::vector<double>(s.data(), s.data() + s.size())}; };

    Linearization lin = linearize(rm.model(), field(sigma), rm.protocol(), amplitude, rm.forward_options());
    // NOSER weights and the regularisation scale are fixed at the initial state.
    Eigen::VectorXd prior = lin.jacobian.entries.colwise().squaredNorm().transpose();
    const double pmax = prior.maxCoeff();
    for (Eigen::Index e = 0; e < n; ++e) prior(e) = std::pow(std::max(prior(e), 1e-12 * pmax), opt.noser_exponent);
    const Eigen::VectorXd pinv = prior.cwiseInverse();
    const double mu = opt.lambda * opt.lambda * regularisation_scale(lin.jacobian.entries, pinv);

    auto objective = [&](const Eigen::VectorXd& s, double data_misfit) {
        const Eigen::VectorXd e = s - sigma0;
        return data_misfit * data_misfit + mu * e.dot(prior.cwiseProduct(e));
    };

    Reconstruction rec;
    rec.mode = ReconMode::absolute;
    rec.lambda = opt.lambda;
    double current_misfit = misfit(meas, lin.frame.voltages);
    double current_obj = objective(sigma, current_misfit);
    rec.residual_history.push_back(current_misfit);
    rec.objective_history.push_back(current_obj);

    for (int it = 0; it < opt.max_iterations; ++it) {
        const Eigen::VectorXd r = meas - to_vector(lin.frame.voltages);
        const Eigen::VectorXd offset = sigma - sigma0;
        const Eigen::VectorXd step = solve_with_mu(lin.jacobian.entries, r, mu, pinv, &offset);

        double best_obj = current_obj, best_misfit = current_misfit;
        Eigen::VectorXd best;
        double alpha = 1.0;
        for (int k = 0; k < opt.line_search_steps; ++k, alpha *= 0.5) {
            const Eigen::VectorXd trial = (sigma + alpha * step).cwiseMax(floor);
            const Frame f = solve_forward(rm.model(), field(trial), rm.protocol(), amplitude, rm.forward_options());
            const double m = misfit(meas, f.voltages);
            const double obj = objective(trial, m);
            if (obj < best_obj) {
                best_obj = obj;
                best_misfit = m;
                best = trial;
            }
        }
        if (best.size() == 0) {
            rec.stagnated = true;
            break;
        }
        sigma = best;
        ++rec.iterations;
        rec.residual_history.push_back(best_misfit);
        rec.objective_history.push_back(best_obj);
        const double change = std::abs(current_misfit - best_misfit) / std::max(current_misfit, 1e-300);
        current_misfit = best_misfit;
        current_obj = best_obj;
        if (change < opt.stop_tolerance || it + 1 == opt.max_iterations) break;
        lin = linearize(rm.model(), field(sigma), rm.protocol(), amplitude, rm.forward_options());
    }
    rec.values.assign(sigma.data(), sigma.data() + sigma.size());
    return rec;
}

// ---------------------------------------------------------------- difference

CvResult cross_validate_lambda(const ReconMesh& rm, const Frame& frame, const Frame& reference, const CvOptions& opt) {
    check_frame(frame, rm, "frame");
    check_frame(reference, rm, "reference");
    if (opt.folds < 2) throw InputError("cross validation needs at least two folds");
    if (opt.grid_points < 1 || !(opt.lambda_min > 0.0) || !(opt.lambda_max >= opt.lambda_min))
        throw ParameterError("cross validation: bad lambda grid");

    const Eigen::MatrixXd& J = rm.jacobian();
    const Eigen::VectorXd dv = to_vector(frame.voltages) - to_vector(reference.voltages);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(J.cols());
    const double scale = regularisation_scale(J, ones);

    // Folds group rows by injection pair, in order of first appearance.
    std::vector<ElectrodePair> pairs;
    std::vector<int> fold_of(rm.protocol().size());
    for (std::size_t i = 0; i < rm.protocol().size(); ++i) {
        const auto& row = rm.protocol().rows[i];
        const ElectrodePair p{row.inject_pos - 1, row.inject_neg - 1};
        auto it = std::find(pairs.begin(), pairs.end(), p);
        if (it == pairs.end()) {
            pairs.push_back(p);
            it = pairs.end() - 1;
        }
        fold_of[i] = static_cast<int>(it - pairs.begin()) % opt.folds;
    }

    CvResult out;
    for (int g = 0; g < opt.grid_points; ++g) {
        const double t = opt.grid_points == 1 ? 0.0 : static_cast<double>(g) / (opt.grid_points - 1);
        out.lambdas.push_back(std::exp(std::log(opt.lambda_min) + t * (std::log(opt.lambda_max) - std::log(opt.lambda_min))));
    }
    out.errors.assign(out.lambdas.size(), 0.0);
    // Per-fold mean squared error, folds x lambdas.
    Eigen::MatrixXd fold_err(opt.folds, static_cast<Eigen::Index>(out.lambdas.size()));

    std::size_t held_total = 0;
    for (int fold = 0; fold < opt.folds; ++fold) {
        std::vector<Eigen::Index> train, held;
        for (std::size_t i = 0; i < fold_of.size(); ++i)
            (fold_of[i] == fold ? held : train).push_back(static_cast<Eigen::Index>(i));
        if (held.empty() || train.empty()) throw InputError("cross validation fold " + std::to_string(fold) + " is empty");
        const Eigen::MatrixXd Jt = J(train, Eigen::all);
        const Eigen::MatrixXd Jh = J(held, Eigen::all);
        const Eigen::VectorXd dt = dv(train);
        const Eigen::VectorXd dh = dv(held);
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram(Jt, ones));
        const Eigen::MatrixXd C = Jh * Jt.transpose() * eig.eigenvectors();
        const Eigen::VectorXd proj = eig.eigenvectors().transpose() * dt;
        for (std::size_t g = 0; g < out.lambdas.size(); ++g) {
            const double mu = out.lambdas[g] * out.lambdas[g] * scale;
            const Eigen::VectorXd coef = proj.array() / (eig.eigenvalues().array().max(0.0) + mu);
            const double e = (dh - C * coef).squaredNorm();
            out.errors[g] += e;
            fold_err(fold, static_cast<Eigen::Index>(g)) = e / static_cast<double>(held.size());
        }
        held_total += held.size();
    }
    for (double& e : out.errors) e /= static_cast<double>(held_total);
    for (Eigen::Index g = 0; g < fold_err.cols(); ++g) {
        const auto col = fold_err.col(g).array();
        const double m = col.mean();
        const double var = (col - m).square().sum() / static_cast<double>(opt.folds - 1);
        out.standard_errors.push_back(std::sqrt(var / opt.folds));
    }
    std::size_t best = 0;
    for (std::size_t g = 1; g < out.errors.size(); ++g)
        if (out.errors[g] < out.errors[best]) best = g;
    out.minimum_lambda = out.lambdas[best];
    if (opt.one_standard_error) {
        const double limit = out.errors[best] + out.standard_errors[best];
        std::size_t pick = best;
        for (std::size_t g = best + 1; g < out.errors.size() && out.errors[g] <= limit; ++g) pick = g;
        best = pick;
    }
    out.lambda = out.lambdas[best];
    return out;
}

double select_lambda_cv(const ReconMesh& rm, const Frame& frame, const Frame& reference, const CvOptions& opt) {
    return cross_validate_lambda(rm, frame, reference, opt).lambda;
}

CvResult cross_validate_series(const ReconMesh& rm, const std::vector<Frame>& frames, const Frame& reference,
                               const CvOptions& opt) {
    if (frames.empty()) throw InputError("cross validation needs at least one frame");
    CvResult out;
    for (const auto& f : frames) {
        const CvResult one = cross_validate_lambda(rm, f, reference, opt);
        if (out.lambdas.empty()) {
            out.lambdas = one.lambdas;
            out.errors.assign(one.errors.size(), 0.0);
            out.standard_errors.assign(one.errors.size(), 0.0);
        }
        for (std::size_t g = 0; g < one.errors.size(); ++g) {
            out.errors[g] += one.errors[g] / static_cast<double>(frames.size());
            out.standard_errors[g] += one.standard_errors[g] / static_cast<double>(frames.size());
        }
    }
    std::size_t best = 0;
    for (std::size_t g = 1; g < out.errors.size(); ++g)
        if (out.errors[g] < out.errors[best]) best = g;
    out.minimum_lambda = out.lambdas[best];
    if (opt.one_standard_error) {
        const double limit = out.errors[best] + out.standard_errors[best];
        std::size_t pick = best;
        for (std::size_t g = best + 1; g < out.errors.size() && out.errors[g] <= limit; ++g) pick = g;
        best = pick;
    }
    out.lambda = out.lambdas[best];
    return out;
}

Reconstruction reconstruct_difference(const Frame& frame, const Frame& reference, const ReconMesh& rm, ReconMode mode,
                                      double lambda, const CvOptions& cv) {
    if (mode == ReconMode::absolute) throw ParameterError("difference reconstruction needs mode td or ptd");
    if (frame.voltages.size() != reference.voltages.size() || frame.protocol != reference.protocol)
        throw InputError("frame and reference use different protocols");
    check_frame(frame, rm, "frame");
    if (lambda < 0.0) lambda = select_lambda_cv(rm, frame, reference, cv);
    const Eigen::VectorXd dv = to_vector(frame.voltages) - to_vector(reference.voltages);
    const Eigen::VectorXd d = regularised_solve(rm.jacobian(), dv, lambda);
    Reconstruction rec;
    rec.mode = mode;
    rec.lambda = lambda;
    rec.iterations = 1;
    rec.values.assign(d.data(), d.data() + d.size());
    rec.residual_history.push_back((dv - rm.jacobian() * d).norm());
    return rec;
}

// ---------------------------------------------------------------- cross-section

CsaResult approximate_csa(const Reconstruction& recon, const ReconMesh& rm, const CsaOptions& opt) {
    if (recon.mode == ReconMode::absolute) throw ParameterError("CSA needs a difference image");
    if (recon.values.size() != rm.element_count()) throw InputError("image does not match the reconstruction mesh");
    const Mesh& mesh = rm.mesh();
    CsaResult out;
    const auto slice = slice_elements(mesh, opt.slice_center, opt.slice_thickness);
    if (slice.empty()) throw GeometryError("mid slice contains no elements");
    const double shaft = mesh.catheter ? mesh.catheter->shaft_radius() : CatheterSpec{}.shaft_radius();

    std::vector<std::size_t> reference;
    if (opt.reference == CsaReference::electrode_faces) {
        reference = rm.electrode_elements();
    } else {
        // Mid-slice elements with a face on the catheter surface.
        const double tol = 1e-6 * std::max(1.0, shaft);
        for (auto e : slice) {
            int on_shaft = 0;
            for (int n : mesh.elements[e]) on_shaft += std::abs(mesh.nodes[n].head<2>().norm() - shaft) < tol;
            if (on_shaft >= 3) reference.push_back(e);
        }
    }
    if (reference.empty()) throw GeometryError("no reference elements for the CSA threshold");
    double sum = 0.0;
    for (auto e : reference) sum += recon.values[e];
    out.electrode_average = sum / static_cast<double>(reference.size());

    out.slice_elements = slice.size();
    out.sector_deficit_mm2.assign(8, 0.0);
    double retained_volume = 0.0;
    const double avg = out.electrode_average;
    for (auto e : slice) {
        const bool remove = avg != 0.0 && recon.values[e] / avg > opt.factor;
        const double v = mesh.element_volume(e);
        if (remove) {
            out.removed_elements.push_back(e);
            const Eigen::Vector3d c = mesh.element_centroid(e);
            double a = std::atan2(c.y(), c.x()) + std::numbers::pi / 8.0;
            a = std::fmod(a, 2.0 * std::numbers::pi);
            if (a < 0.0) a += 2.0 * std::numbers::pi;
            const auto k = std::min<std::size_t>(7, static_cast<std::size_t>(a / (std::numbers::pi / 4.0)));
            out.sector_deficit_mm2[k] += v / opt.slice_thickness;
        } else {
            retained_volume += v;
            ++out.retained;
        }
    }
    if (out.retained == 0) throw NumericError("every mid-slice element was removed by the threshold");
    out.area_mm2 = retained_volume / opt.slice_thickness + std::numbers::pi * shaft * shaft;
    return out;
}

// ---------------------------------------------------------------- analysis

double azimuth_distance(double a, double b) {
    double d = std::fmod(std::abs(a - b), 360.0);
    return d > 180.0 ? 360.0 - d : d;
}

double axis_distance(double a, double b) {
    double d = std::fmod(std::abs(a - b), 180.0);
    return d > 90.0 ? 180.0 - d : d;
}

DecreaseAnalysis analyse_decrease(const Reconstruction& recon, const ReconMesh& rm, double thickness) {
    if (recon.values.size() != rm.element_count()) throw InputError("image does not match the reconstruction mesh");
    const double baseline = recon.mode == ReconMode::absolute ? kSalineConductivity : 0.0;
    const Mesh& mesh = rm.mesh();
    const auto slice = slice_elements(mesh, 0.0, thickness);
    struct Item { double theta, w; };
    std::vector<Item> items;
    double c1 = 0, s1 = 0, c2 = 0, s2 = 0, total = 0;
    for (auto e : slice) {
        const double w = std::max(0.0, baseline - recon.values[e]) * mesh.element_volume(e);
        if (w <= 0.0) continue;
        const Eigen::Vector3d c = mesh.element_centroid(e);
        const double t = std::atan2(c.y(), c.x());
        items.push_back({t, w});
        c1 += w * std::cos(t);
        s1 += w * std::sin(t);
        c2 += w * std::cos(2 * t);
        s2 += w * std::sin(2 * t);
        total += w;
    }
    DecreaseAnalysis out;
    out.total_weight = total;
    if (total <= 0.0) return out;
    const double deg = 180.0 / std::numbers::pi;
    out.centroid_deg = std::fmod(std::atan2(s1, c1) * deg + 360.0, 360.0);
    out.centroid_strength = std::hypot(c1, s1) / total;
    out.axis_deg = std::fmod(0.5 * std::atan2(s2, c2) * deg + 180.0, 180.0);
    out.axis_strength = std::hypot(c2, s2) / total;
    // Split across the line perpendicular to the axis.
    double a = 0.0, b = 0.0;
    for (const auto& it : items) {
        const double along = std::cos(it.theta - out.axis_deg / deg);
        (along >= 0.0 ? a : b) += it.w;
    }
    out.balance = std::max(a, b) > 0.0 ? std::min(a, b) / std::max(a, b) : 0.0;
    return out;
}

// ---------------------------------------------------------------- export

void write_reconstruction_vtk(const Reconstruction& recon, const ReconMesh& rm, const std::filesystem::path& path) {
    if (recon.values.size() != rm.element_count()) throw InputError("image does not match the reconstruction mesh");
    const std::string name = recon.mode == ReconMode::absolute ? "sigma" : "delta_sigma";
    write_vtk(rm.mesh(), path, {CellField{name, recon.values}});
}

void write_reconstruction_csv(const Reconstruction& recon, const std::filesystem::path& path) {
    CsvWriter w(path);
    w.comment("mode " + to_string(recon.mode));
    w.comment("lambda " + format_number(recon.lambda));
    w.comment("iterations " + std::to_string(recon.iterations));
    w.header({"element", "value"});
    for (std::size_t e = 0; e < recon.values.size(); ++e) {
        w.cell(e).cell(recon.values[e]);
        w.end_row();
    }
    w.close();
}

} // namespace lumeneit
