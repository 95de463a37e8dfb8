// beamsim.hpp - uniform linear array signals and DVM-beamformed training data.

#pragma once

#include "stnn/common.hpp"
#include "stnn/dvm.hpp"
#include "stnn/random.hpp"

#include <optional>

namespace stnn {

inline constexpr double kDefaultFmaxHz = 32e9;

struct ArrayGeometry {
    std::size_t n = 0;
    double spacing_m = 0.0;
    double f_max_hz = kDefaultFmaxHz;
    double tau_s = 0.0;

    // Half-wavelength spacing at f_max and tau = 1 / (f_max N) unless overridden.
    static ArrayGeometry make(std::size_t n, double f_max_hz = kDefaultFmaxHz, std::optional<double> spacing_m = {},
                              std::optional<double> tau_s = {});
    void validate() const;
};

// How noise_std is spread over the two components of a complex sample.
enum class NoiseConvention { complex_total, per_component };

std::string to_string(NoiseConvention c);
NoiseConvention noise_convention_from_string(const std::string& s);

// Delay of antenna k (1-based) for a plane wave from angle_deg.
double steering_delay(std::size_t k, const ArrayGeometry& geometry, double angle_deg);

CVector synth_received(const ArrayGeometry& geometry, double freq_hz, double angle_deg, double t, double noise_std, Rng& rng,
                       NoiseConvention convention = NoiseConvention::complex_total);

// alpha = e^{-2 pi j f tau}
DvmSpec dvm_for(const ArrayGeometry& geometry, double freq_hz);

struct Sample {
    double t = 0.0;
    double angle_deg = 0.0;
    RVector input;   // real_split(u), 2N
    RVector target;  // real_split(A~ u), 2N
};

struct Dataset {
    std::size_t n = 0;
    double freq_hz = 0.0;
    double f_max_hz = kDefaultFmaxHz;
    double spacing_m = 0.0;
    double tau_s = 0.0;
    double noise_std = 0.0;
    NoiseConvention noise_convention = NoiseConvention::complex_total;
    std::uint64_t seed = 0;
    std::vector<double> angles_deg;
    std::vector<Sample> samples;

    DvmSpec dvm() const { return DvmSpec::from_phase(n, dvm_phase()); }
    double dvm_phase() const;
    std::size_t size() const { return samples.size(); }
};

Dataset make_dataset(const ArrayGeometry& geometry, double freq_hz, const std::vector<double>& angles_deg,
                     std::size_t samples_per_angle, double noise_std, std::uint64_t seed,
                     NoiseConvention convention = NoiseConvention::complex_total);

// Largest |target - real_split(A~ input)| over all samples and components.
double max_target_deviation(const Dataset& ds);

// Stratified by angle: each angle's samples are shuffled and split separately.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double train_fraction, std::uint64_t seed);

enum class DatasetFormat { binary, csv };

DatasetFormat dataset_format_from_string(const std::string& s);

inline constexpr double kDatasetLoadTolerance = 1e-9;

// CSV files carry their metadata in a "<path>.meta.json" sidecar.
void save_dataset(const Dataset& ds, const std::string& path, DatasetFormat format);
// Checks the target consistency of every sample; throws IoError on failure.
Dataset load_dataset(const std::string& path, DatasetFormat format);
// Picks the format from the file's leading bytes.
Dataset load_dataset(const std::string& path);

}  // namespace stnn
