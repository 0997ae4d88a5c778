// Serial reference kernels against their OpenMP versions on a desk-scale mesh.
// Usage: bench_kernels [target_size_mm] [repeats]
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "lumeneit/fem.hpp"
#include "lumeneit/kernels.hpp"

using namespace lumeneit;

namespace {

double best_of(int repeats, const std::function<void()>& f) {
    double best = 1e300;
    for (int i = 0; i < repeats; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
}

void row(const char* name, double serial_ms, double parallel_ms) {
    std::printf("%-18s %10.2f %10.2f %8.2fx\n", name, serial_ms, parallel_ms, serial_ms / parallel_ms);
}

} // namespace

int main(int argc, char** argv) {
    const double target = argc > 1 ? std::atof(argv[1]) : 2.5;
    const int repeats = argc > 2 ? std::atoi(argv[2]) : 3;
    const Mesh mesh = build_phantom_mesh(LumenProfile::ellipse(26.0, 0.75, 11.25), CatheterSpec{}, target);
    std::printf("mesh: %zu nodes, %zu elements, %d threads, best of %d\n", mesh.node_count(), mesh.element_count(),
                kernels::thread_count(), repeats);
    std::printf("%-18s %10s %10s %9s\n", "kernel", "serial ms", "omp ms", "speedup");

    kernels::ElementGeometry geom;
    row("element_geometry", best_of(repeats, [&] { geom = kernels::serial::element_geometry(mesh); }),
        best_of(repeats, [&] { geom = kernels::parallel::element_geometry(mesh); }));
    kernels::LocalMatrices k;
    row("unit_stiffness", best_of(repeats, [&] { k = kernels::serial::unit_stiffness(geom); }),
        best_of(repeats, [&] { k = kernels::parallel::unit_stiffness(geom); }));

    // Real potential fields: one column per injection pair of the full protocol.
    const FemModel model(mesh);
    const ForwardSolver solver(model, ConductivityField::uniform(mesh.element_count()));
    const Protocol protocol = full_protocol();
    std::vector<ElectrodePair> pairs = injection_pairs(protocol);
    const auto meas = measurement_pairs(protocol);
    pairs.insert(pairs.end(), meas.begin(), meas.end());
    const ForwardSolution sol = solver.solve(pairs, 1.0);

    kernels::GradientField grads;
    row("field_gradients",
        best_of(repeats, [&] { grads = kernels::serial::field_gradients(model.elements(), geom, sol.node_potentials); }),
        best_of(repeats, [&] { grads = kernels::parallel::field_gradients(model.elements(), geom, sol.node_potentials); }));

    auto column = [&](int pos, int neg) {
        return int(std::find(pairs.begin(), pairs.end(), ElectrodePair{pos - 1, neg - 1}) - pairs.begin());
    };
    std::vector<int> a, b;
    for (const auto& r : protocol.rows) {
        a.push_back(column(r.inject_pos, r.inject_neg));
        b.push_back(column(r.meas_pos, r.meas_neg));
    }
    Eigen::MatrixXd J(Eigen::Index(protocol.size()), Eigen::Index(mesh.element_count()));
    row("sensitivity", best_of(repeats, [&] { kernels::serial::sensitivity(geom, grads, a, b, -1.0, J); }),
        best_of(repeats, [&] { kernels::parallel::sensitivity(geom, grads, a, b, -1.0, J); }));

    const std::vector<double> sigma(mesh.element_count(), kSalineConductivity);
    std::vector<double> cd;
    row("current_density", best_of(repeats, [&] { cd = kernels::serial::current_density(geom, grads, 0, sigma); }),
        best_of(repeats, [&] { cd = kernels::parallel::current_density(geom, grads, 0, sigma); }));

    const Eigen::VectorXd w = Eigen::VectorXd::Ones(J.cols());
    Eigen::MatrixXd G;
    row("weighted_gram", best_of(repeats, [&] { G = kernels::serial::weighted_gram(J, w); }),
        best_of(repeats, [&] { G = kernels::parallel::weighted_gram(J, w); }));
    return 0;
}
