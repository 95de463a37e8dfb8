// trainer.hpp - loss, reverse-mode gradients, optimisers and the training loop.

#pragma once

#include "stnn/beamsim.hpp"
#include "stnn/network.hpp"

#include <Eigen/Dense>

#include <functional>

namespace stnn {

// (1 / (N * rows)) * sum of squared differences over all 2N real components.
double mse_loss(const std::vector<RVector>& pred, const std::vector<RVector>& target, std::size_t n);

// Gradient of the single-sample loss (M_b = 1) with respect to every stored
// parameter. Pinned chain entries receive values too but are never visited by
// for_each_trainable, so optimisers leave them alone.
GradientPack backward(const Network& net, const ForwardTrace& trace, std::span<const double> target);

// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output) and returns
// d(loss)/d(input).
RVector backward_from_output_grad(const Network& net, const ForwardTrace& trace, std::span<const double> grad_out,
                                  GradientPack& grad);

void add_into(const Network& net, GradientPack& dst, const GradientPack& src);

struct BatchView {
    const std::vector<Sample>* samples = nullptr;
    std::vector<std::size_t> indices;  // empty = all samples

    std::size_t size() const { return indices.empty() ? samples->size() : indices.size(); }
    const Sample& operator[](std::size_t i) const { return (*samples)[indices.empty() ? i : indices[i]]; }
};

BatchView whole(const std::vector<Sample>& samples);

double batch_mse(const Network& net, const BatchView& batch);

struct LossAndGrad {
    double loss = 0.0;
    GradientPack grad;
};

// Samples are grouped into a fixed number of contiguous chunks whose partial
// sums are added in order, so the result does not depend on `threads`.
LossAndGrad loss_and_gradient(const Network& net, const BatchView& batch, std::size_t threads = 1);

struct GradCheckOptions {
    double h_rel = 1e-6;
    // Relative error is max(0, |a - n| - res) / max(|a|, |n|, floor) where
    // res = resolution_ulps * eps * max(|L(theta+h)|, |L(theta-h)|) / h is the
    // rounding resolution of the central difference itself.
    double floor = 1e-6;
    double resolution_ulps = 4.0;
    // Self-test hook: scales one analytic gradient entry before comparison.
    std::optional<std::size_t> corrupt_index;
    double corrupt_factor = 1.01;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;  // flat trainable index
    double analytic = 0.0;
    double numeric = 0.0;
    double resolution = 0.0;  // finite-difference resolution at the worst parameter
    double raw_max_rel_error = 0.0;  // same ratio without the resolution term
    std::size_t checked = 0;
};

GradCheckResult grad_check(const Network& net, const BatchView& batch, const GradCheckOptions& options = {});

// Redraws (via `redraw`) every sample whose pre-activations come within
// `margin` of the activation kink, up to `max_tries` times per sample. Returns
// false if some sample could not be moved away.
bool resample_away_from_kinks(const Network& net, std::vector<Sample>& samples, const std::function<Sample()>& redraw,
                              double margin = 1e-4, int max_tries = 1000);

// Flat names of the trainable scalars ("block0.w1.sub0.d_hat_in[3]").
std::vector<std::string> trainable_names(const Network& net);

// --- optimisers ----------------------------------------------------------------

enum class OptimizerKind { sgd, adam, lm };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_kind_from_string(const std::string& s);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double lm_damping = 1e-3;  // initial mu
    double lm_increase = 10.0;
    double lm_decrease = 0.1;
    int lm_max_tries = 10;  // rejected trial steps per optimiser step
    std::size_t batch_size = 32;
    std::size_t epochs = 100;
    std::uint64_t seed = 0;
    double target_mse = 0.0;  // stop once validation MSE <= target (0 = off)
    std::size_t patience = 0;  // stop after this many epochs without improvement (0 = off)
    std::size_t threads = 1;

    void validate() const;
};

inline constexpr std::size_t kLmMaxParams = 5000;

std::string optimizer_config_json(const OptimizerConfig& cfg);

void sgd_step(std::span<double> theta, std::span<const double> grad, double lr);

class AdamState {
public:
    explicit AdamState(std::size_t size = 0) : m_(size, 0.0), v_(size, 0.0) {}
    void step(std::span<double> theta, std::span<const double> grad, const OptimizerConfig& cfg);
    std::uint64_t steps() const { return t_; }

private:
    RVector m_;
    RVector v_;
    std::uint64_t t_ = 0;
};

// Generic problem: minimise sum_i r_i(theta)^2.
struct LeastSquaresProblem {
    std::size_t num_params = 0;
    std::function<RVector(std::span<const double>)> residuals;
    std::function<Eigen::MatrixXd(std::span<const double>)> jacobian;  // residuals x params
};

struct LmState {
    double mu = 1e-3;
};

struct LmStepResult {
    bool accepted = false;
    double cost_before = 0.0;
    double cost_after = 0.0;
    int tries = 0;
};

// One damped Gauss-Newton step: solves (J^T J + mu I) delta = -J^T r and
// raises mu until the cost decreases (or the try budget runs out).
LmStepResult lm_step(const LeastSquaresProblem& problem, RVector& theta, LmState& state, const OptimizerConfig& cfg);

// Residuals (pred - target) / sqrt(N * rows) of a network over a batch, so that
// the sum of squares equals batch_mse.
LeastSquaresProblem network_least_squares(const Network& net, const BatchView& batch);

// --- training loop -----------------------------------------------------------

enum class StopReason { epochs, target_mse, patience };

std::string to_string(StopReason r);

struct TrainReport {
    NetworkConfig network;
    OptimizerConfig optimizer;
    std::size_t train_samples = 0;
    std::size_t val_samples = 0;
    std::size_t epochs_run = 0;
    std::uint64_t steps = 0;
    RVector train_mse;  // index 0 is the untrained network
    RVector val_mse;
    std::size_t param_count = 0;
    double wall_time_s = 0.0;
    StopReason stop_reason = StopReason::epochs;

    double final_train_mse() const { return train_mse.back(); }
    double final_val_mse() const { return val_mse.back(); }
};

// Report as JSON text. wall_time_s is the only field that varies between
// identical runs; pass include_wall_time = false to compare reports.
std::string report_to_json(const TrainReport& report, bool include_wall_time = true, int indent = 2);

struct TrainResult {
    Network net;
    TrainReport report;
};

using EpochCallback = std::function<void(std::size_t epoch, double train_mse, double val_mse)>;

// Mini-batch training over `train` with per-epoch validation on `val` (which
// may be empty). Throws DivergenceError on a non-finite loss and ShapeError if
// the data does not match the network.
TrainResult train(Network net, const Dataset& train, const Dataset& val, const OptimizerConfig& cfg,
                  const EpochCallback& on_epoch = {});

}  // namespace stnn
