#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lumeneit/fem.hpp"

namespace lumeneit {

struct ReconMeshOptions {
    double diameter = 30.0; // mm, largest expected lumen
    CatheterSpec catheter;
    MeshResolution resolution = default_resolution();
    ForwardOptions forward;

    /// Coarse resolution giving 11520 elements for the default catheter.
    static MeshResolution default_resolution();
};

/// Coarse circular reconstruction mesh with the homogeneous full-protocol
/// linearisation precomputed.
class ReconMesh {
public:
    static ReconMesh build(const ReconMeshOptions& options = {}, const Protocol& protocol = full_protocol());
    ReconMesh(Mesh mesh, const Protocol& protocol, ForwardOptions forward = {});

    const Mesh& mesh() const { return *mesh_; }
    const FemModel& model() const { return *model_; }
    const Protocol& protocol() const { return protocol_; }
    const ForwardOptions& forward_options() const { return forward_; }
    std::size_t element_count() const { return mesh_->element_count(); }

    /// Sensitivity at homogeneous saline, measurements x elements.
    const Eigen::MatrixXd& jacobian() const { return jacobian_; }
    /// Simulated frame of the homogeneous (unobstructed) reconstruction lumen.
    const Frame& homogeneous_frame() const { return homogeneous_; }
    /// Elements owning at least one electrode face.
    const std::vector<std::size_t>& electrode_elements() const { return electrode_elements_; }

private:
    std::shared_ptr<const Mesh> mesh_;
    std::shared_ptr<const FemModel> model_;
    Protocol protocol_;
    ForwardOptions forward_;
    Eigen::MatrixXd jacobian_;
    Frame homogeneous_;
    std::vector<std::size_t> electrode_elements_;
};

enum class ReconMode { absolute, td, ptd };
std::string to_string(ReconMode m);
ReconMode recon_mode_from_string(const std::string& s);

struct Reconstruction {
    std::vector<double> values; // sigma (absolute) or delta sigma (difference), S/m
    ReconMode mode = ReconMode::absolute;
    double lambda = 0.0;
    int iterations = 0;
    std::vector<double> residual_history;  // ||v_meas - v(sigma)|| per accepted iterate, V
    std::vector<double> objective_history; // regularised objective per accepted iterate
    bool stagnated = false;
};

/// Tikhonov-type solve: argmin ||J d - r||^2 + mu d^T diag(prior) d with
/// mu = lambda^2 * trace(J P^-1 J^T) / rows. A null prior means identity.
/// lambda = 0 requires at least as many rows as columns.
Eigen::VectorXd regularised_solve(const Eigen::MatrixXd& J, const Eigen::VectorXd& r, double lambda,
                                  const Eigen::VectorXd* prior = nullptr,
                                  const Eigen::VectorXd* prior_gradient = nullptr);

struct AbsoluteOptions {
    double lambda = 0.01;
    int max_iterations = 4;
    double noser_exponent = 0.5;
    double stop_tolerance = 1e-4; // relative misfit change
    int line_search_steps = 11;   // step fractions 1, 1/2, ..., 1/2^10
    double initial_sigma = kSalineConductivity;
};

Reconstruction reconstruct_absolute(const Frame& frame, const ReconMesh& rm, const AbsoluteOptions& options = {});

struct CvOptions {
    int folds = 8;
    double lambda_min = 1e-6;
    double lambda_max = 1e2;
    int grid_points = 25;
    // Walk up the grid from the minimum and keep the largest lambda whose
    // error stays within one standard error of the minimum.
    bool one_standard_error = true;
};

struct CvResult {
    double lambda = 0.0;
    std::vector<double> lambdas;
    std::vector<double> errors; // mean held-out squared error per lambda
    std::vector<double> standard_errors; // across folds, per lambda
    double minimum_lambda = 0.0; // arg-min of errors
};

CvResult cross_validate_lambda(const ReconMesh& rm, const Frame& frame, const Frame& reference,
                               const CvOptions& options = {});
double select_lambda_cv(const ReconMesh& rm, const Frame& frame, const Frame& reference,
                        const CvOptions& options = {});

/// One lambda for a whole frame series: per-frame curves are averaged before
/// the selection rule is applied.
CvResult cross_validate_series(const ReconMesh& rm, const std::vector<Frame>& frames, const Frame& reference,
                               const CvOptions& options = {});

/// One-shot linear difference solve. A negative lambda selects it by cross validation.
Reconstruction reconstruct_difference(const Frame& frame, const Frame& reference, const ReconMesh& rm,
                                      ReconMode mode = ReconMode::td, double lambda = -1.0,
                                      const CvOptions& cv = {});

// Elements whose mean delta sigma sets the CSA threshold.
enum class CsaReference {
    shaft_surface,  // mid-slice elements with a face on the catheter surface
    electrode_faces // elements owning an electrode face (on the rings)
};

struct CsaOptions {
    double factor = 3.0;
    CsaReference reference = CsaReference::shaft_surface;
    double slice_thickness = 2.0; // mm
    double slice_center = 0.0;
};

struct CsaResult {
    double area_mm2 = 0.0;
    std::size_t retained = 0;
    std::size_t slice_elements = 0;
    double electrode_average = 0.0; // mean delta sigma of the reference elements
    std::vector<std::size_t> removed_elements;
    std::vector<double> sector_deficit_mm2; // removed footprint per 45 deg sector, sector k centred on k*45 deg
};

/// Elements of the mid slice are removed when delta sigma exceeds `factor`
/// times the reference average in the direction of that average
/// (delta sigma / average > factor). The shaft area is added back.
CsaResult approximate_csa(const Reconstruction& recon, const ReconMesh& rm, const CsaOptions& options = {});

/// Azimuthal statistics of the conductivity decrease in the mid slice.
/// Weights are max(0, baseline - value) times element volume.
struct DecreaseAnalysis {
    double centroid_deg = 0.0;   // first circular moment: direction of the dominant decrease
    double axis_deg = 0.0;       // second circular moment, in [0, 180): axis of a two-sided decrease
    double centroid_strength = 0.0; // resultant length of the first moment, 0..1
    double axis_strength = 0.0;     // resultant length of the second moment, 0..1
    double balance = 0.0;        // smaller / larger decrease weight of the two halves split across the axis
    double total_weight = 0.0;
};

DecreaseAnalysis analyse_decrease(const Reconstruction& recon, const ReconMesh& rm, double slice_thickness = 2.0);

/// Smallest angle between two azimuths (deg), and between two axes (deg, period 180).
double azimuth_distance(double a_deg, double b_deg);
double axis_distance(double a_deg, double b_deg);

void write_reconstruction_vtk(const Reconstruction& recon, const ReconMesh& rm, const std::filesystem::path& path);
void write_reconstruction_csv(const Reconstruction& recon, const std::filesystem::path& path);

} // namespace lumeneit
