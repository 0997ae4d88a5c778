#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "lumeneit/error.hpp"
#include "lumeneit/inverse.hpp"
#include "support.hpp"

using namespace lumeneit;
constexpr double kPi = std::numbers::pi;

namespace {

const ReconMesh& small_recon() {
    static const ReconMesh rm = [] {
        ReconMeshOptions o;
        o.resolution.radial_bands = 3;
        o.resolution.axial_layers = 10;
        return ReconMesh::build(o);
    }();
    return rm;
}

Frame phantom_frame(const LumenProfile& p) {
    const Mesh mesh = build_phantom_mesh(p, CatheterSpec{}, test_support::coarse());
    const FemModel model(mesh);
    return solve_forward(model, ConductivityField::uniform(mesh.element_count()), full_protocol());
}

double radius_of(const Mesh& m, std::size_t e) {
    const Eigen::Vector3d c = m.element_centroid(e);
    return std::hypot(c.x(), c.y());
}

} // namespace

TEST_CASE("regularised solve matches the primal normal equations") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd J(12, 30);
    for (Eigen::Index i = 0; i < J.size(); ++i) J.data()[i] = n(rng);
    Eigen::VectorXd r(12), prior(30);
    for (Eigen::Index i = 0; i < 12; ++i) r(i) = n(rng);
    for (Eigen::Index i = 0; i < 30; ++i) prior(i) = 0.5 + std::abs(n(rng));
    const double lambda = 0.3;
    const Eigen::VectorXd d = regularised_solve(J, r, lambda, &prior);
    const double mu = lambda * lambda * (J * prior.cwiseInverse().asDiagonal() * J.transpose()).trace() / 12.0;
    Eigen::MatrixXd A = J.transpose() * J;
    A.diagonal() += mu * prior;
    const Eigen::VectorXd expected = A.ldlt().solve(J.transpose() * r);
    CHECK((d - expected).norm() < 1e-9 * expected.norm());
    CHECK_THROWS_AS(regularised_solve(J, r, 0.0), ParameterError);
    CHECK_THROWS_AS(regularised_solve(J, r, -1.0), ParameterError);
}

TEST_CASE("time difference of identical frames is identically zero") {
    const ReconMesh& rm = small_recon();
    const Frame f = rm.homogeneous_frame();
    for (double lambda : {-1.0, 0.01}) {
        const auto rec = reconstruct_difference(f, f, rm, ReconMode::td, lambda);
        for (double v : rec.values) REQUIRE(v == 0.0);
    }
}

TEST_CASE("difference reconstruction is linear in the data") {
    const ReconMesh& rm = small_recon();
    const Frame ref = rm.homogeneous_frame();
    Frame v = ref;
    for (std::size_t i = 0; i < v.size(); ++i) v.voltages[i] *= 1.0 + 0.01 * std::sin(double(i));
    const auto base = reconstruct_difference(v, ref, rm, ReconMode::ptd, 0.02);
    for (double c : {-2.0, 0.5, 3.0}) {
        Frame w = ref;
        for (std::size_t i = 0; i < w.size(); ++i) w.voltages[i] = ref.voltages[i] + c * (v.voltages[i] - ref.voltages[i]);
        const auto scaled = reconstruct_difference(w, ref, rm, ReconMode::ptd, 0.02);
        double err = 0.0, norm = 0.0;
        for (std::size_t e = 0; e < base.values.size(); ++e) {
            err = std::max(err, std::abs(scaled.values[e] - c * base.values[e]));
            norm = std::max(norm, std::abs(c * base.values[e]));
        }
        CHECK(err <= 1e-9 * norm);
    }
}

TEST_CASE("unregularised solve recovers a grouped perturbation (inverse crime)") {
    const ReconMesh& rm = small_recon();
    const Mesh& mesh = rm.mesh();
    // 16 groups: 8 azimuthal sectors x inner / outer half of the annulus.
    const int groups = 16;
    std::vector<int> group(mesh.element_count());
    for (std::size_t e = 0; e < group.size(); ++e) {
        const Eigen::Vector3d c = mesh.element_centroid(e);
        double a = std::atan2(c.y(), c.x());
        if (a < 0) a += 2 * kPi;
        const int sector = std::min(7, int(a / (kPi / 4)));
        group[e] = sector + 8 * (radius_of(mesh, e) > 8.0);
    }
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(Eigen::Index(group.size()), groups);
    for (std::size_t e = 0; e < group.size(); ++e) G(Eigen::Index(e), group[e]) = 1.0;
    const Eigen::MatrixXd Jg = rm.jacobian() * G;
    REQUIRE(Jg.rows() > Jg.cols());

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::VectorXd x(groups);
    for (auto& v : x) v = 1e-4 * kSalineConductivity * u(rng);
    ConductivityField sigma = ConductivityField::uniform(mesh.element_count());
    for (std::size_t e = 0; e < group.size(); ++e) sigma.sigma[e] += x(group[e]);
    const Frame f = solve_forward(rm.model(), sigma, rm.protocol());
    Eigen::VectorXd dv(Eigen::Index(f.size()));
    for (std::size_t i = 0; i < f.size(); ++i) dv(Eigen::Index(i)) = f.voltages[i] - rm.homogeneous_frame().voltages[i];
    const Eigen::VectorXd y = regularised_solve(Jg, dv, 0.0);
    CHECK((y - x).norm() <= 0.01 * x.norm());
}

TEST_CASE("cross validation") {
    const ReconMesh& rm = small_recon();
    const Frame ref = rm.homogeneous_frame();
    const Frame f = phantom_frame(LumenProfile::crescent(26.0, 6.0, 120.0, 90.0));
    const Frame r30 = phantom_frame(LumenProfile::circle(30.0));
    CvOptions plain;
    plain.one_standard_error = false;
    const CvResult cv = cross_validate_lambda(rm, f, r30, plain);
    REQUIRE(cv.lambdas.size() == 25);
    CHECK(cv.lambdas.front() == doctest::Approx(1e-6));
    CHECK(cv.lambdas.back() == doctest::Approx(1e2));
    CHECK(std::find(cv.lambdas.begin(), cv.lambdas.end(), cv.lambda) != cv.lambdas.end());
    CHECK(cv.lambda == cv.minimum_lambda);
    const double lowest = *std::min_element(cv.errors.begin(), cv.errors.end());
    CHECK(cv.errors[std::size_t(std::find(cv.lambdas.begin(), cv.lambdas.end(), cv.lambda) - cv.lambdas.begin())] == lowest);

    // Default: largest lambda within one standard error of the minimum.
    const CvResult cv1 = cross_validate_lambda(rm, f, r30);
    CHECK(cv1.lambda >= cv1.minimum_lambda);
    CHECK(cv1.minimum_lambda == cv.lambda);
    const auto best = std::find(cv1.lambdas.begin(), cv1.lambdas.end(), cv1.minimum_lambda) - cv1.lambdas.begin();
    const auto chosen = std::find(cv1.lambdas.begin(), cv1.lambdas.end(), cv1.lambda) - cv1.lambdas.begin();
    CHECK(cv1.errors[std::size_t(chosen)] <= cv1.errors[std::size_t(best)] + cv1.standard_errors[std::size_t(best)]);

    // The selection is invariant to scaling the data.
    Frame scaled = f;
    for (std::size_t i = 0; i < f.size(); ++i) scaled.voltages[i] = r30.voltages[i] + 3.0 * (f.voltages[i] - r30.voltages[i]);
    CHECK(cross_validate_lambda(rm, scaled, r30, plain).lambda == cv.lambda);
    CHECK(cross_validate_lambda(rm, scaled, r30).lambda == cv1.lambda);

    const CvResult series = cross_validate_series(rm, {f, f}, r30, plain);
    CHECK(series.lambda == cv.lambda);
    (void)ref;
}

TEST_CASE("rotating the phantom one electrode pitch rotates the image") {
    const ReconMesh& rm = small_recon();
    const Mesh& mesh = rm.mesh();
    const Frame r30 = phantom_frame(LumenProfile::circle(30.0));
    const Frame a = phantom_frame(LumenProfile::ellipse(24.0, 0.6, 10.0));
    const Frame b = phantom_frame(LumenProfile::ellipse(24.0, 0.6, 55.0));
    const auto ra = reconstruct_difference(a, r30, rm, ReconMode::ptd, 0.01);
    const auto rb = reconstruct_difference(b, r30, rm, ReconMode::ptd, 0.01);

    // Element e of image b should equal the element of image a whose centroid
    // rotated by +45 deg lands on e.
    const double c45 = std::cos(kPi / 4), s45 = std::sin(kPi / 4);
    double err = 0.0, norm = 0.0;
    for (std::size_t e = 0; e < mesh.element_count(); e += 3) {
        const Eigen::Vector3d t = mesh.element_centroid(e);
        const Eigen::Vector3d src(c45 * t.x() + s45 * t.y(), -s45 * t.x() + c45 * t.y(), t.z());
        std::size_t best = 0;
        double dist = 1e300;
        for (std::size_t k = 0; k < mesh.element_count(); ++k) {
            const double d = (mesh.element_centroid(k) - src).squaredNorm();
            if (d < dist) {
                dist = d;
                best = k;
            }
        }
        REQUIRE(dist < 1e-12);
        err += std::pow(rb.values[e] - ra.values[best], 2);
        norm += std::pow(ra.values[best], 2);
    }
    CHECK(std::sqrt(err / norm) < 0.05);
}

TEST_CASE("absolute solver never increases the objective") {
    const ReconMesh& rm = small_recon();
    const Frame f = solve_forward(rm.model(), ConductivityField::uniform(rm.element_count(), 1.4), rm.protocol());
    AbsoluteOptions o;
    o.max_iterations = 3;
    const auto rec = reconstruct_absolute(f, rm, o);
    REQUIRE(rec.objective_history.size() >= 2);
    for (std::size_t i = 1; i < rec.objective_history.size(); ++i)
        CHECK(rec.objective_history[i] <= rec.objective_history[i - 1]);
    CHECK(rec.residual_history.back() < 0.5 * rec.residual_history.front());
    double mean = 0.0;
    for (double v : rec.values) mean += v;
    mean /= double(rec.values.size());
    CHECK(mean < kSalineConductivity);
    for (double v : rec.values) CHECK(v >= 1e-4 * kSalineConductivity);
}

TEST_CASE("cross-sectional area from a thresholded image") {
    const ReconMesh& rm = small_recon();
    const Mesh& mesh = rm.mesh();
    const double shaft = CatheterSpec{}.shaft_radius();
    Reconstruction rec;
    rec.mode = ReconMode::ptd;
    rec.values.assign(rm.element_count(), 0.0);
    CsaResult none = approximate_csa(rec, rm);
    CHECK(none.removed_elements.empty());
    CHECK(none.area_mm2 == doctest::Approx(kPi * 15.0 * 15.0).epsilon(0.02));

    // Small decrease near the shaft, large decrease beyond r = 9 mm.
    for (std::size_t e = 0; e < rec.values.size(); ++e) rec.values[e] = radius_of(mesh, e) > 9.0 ? -1.0 : -0.1;
    const CsaResult cut = approximate_csa(rec, rm);
    CHECK(cut.electrode_average == doctest::Approx(-0.1));
    double retained = 0.0;
    for (auto e : slice_elements(mesh, 0.0, 2.0))
        if (radius_of(mesh, e) <= 9.0) retained += mesh.element_volume(e);
    CHECK(cut.area_mm2 == doctest::Approx(retained / 2.0 + kPi * shaft * shaft));
    for (double d : cut.sector_deficit_mm2) CHECK(d == doctest::Approx(cut.sector_deficit_mm2[0]));

    // An increase never counts as removal when the reference is a decrease.
    for (std::size_t e = 0; e < rec.values.size(); ++e) rec.values[e] = radius_of(mesh, e) > 9.0 ? 1.0 : -0.1;
    CHECK(approximate_csa(rec, rm).removed_elements.empty());

    rec.mode = ReconMode::absolute;
    CHECK_THROWS_AS(approximate_csa(rec, rm), ParameterError);
}

TEST_CASE("decrease analysis finds a one-sided and a two-sided decrease") {
    const ReconMesh& rm = small_recon();
    const Mesh& mesh = rm.mesh();
    Reconstruction rec;
    rec.mode = ReconMode::td;
    rec.values.assign(rm.element_count(), 0.0);
    for (std::size_t e = 0; e < rec.values.size(); ++e) {
        const Eigen::Vector3d c = mesh.element_centroid(e);
        const double a = std::atan2(c.y(), c.x()) * 180.0 / kPi;
        if (azimuth_distance(a, 120.0) < 30.0) rec.values[e] = -1.0;
    }
    auto d = analyse_decrease(rec, rm);
    CHECK(azimuth_distance(d.centroid_deg, 120.0) < 3.0);
    for (std::size_t e = 0; e < rec.values.size(); ++e) {
        const Eigen::Vector3d c = mesh.element_centroid(e);
        const double a = std::atan2(c.y(), c.x()) * 180.0 / kPi;
        if (azimuth_distance(a, 300.0) < 30.0) rec.values[e] = -1.0;
    }
    d = analyse_decrease(rec, rm);
    CHECK(axis_distance(d.axis_deg, 120.0) < 3.0);
    CHECK(d.balance == doctest::Approx(1.0).epsilon(0.05));
    CHECK(azimuth_distance(350.0, 10.0) == doctest::Approx(20.0));
    CHECK(axis_distance(10.0, 170.0) == doctest::Approx(20.0));
}
