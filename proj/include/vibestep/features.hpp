#ifndef VIBESTEP_FEATURES_HPP
#define VIBESTEP_FEATURES_HPP

#include "vibestep/data_model.hpp"

#include <span>
#include <vector>

namespace vibestep {

// 1.4826 * median absolute deviation of the samples.
double noise_floor(std::span<const double> samples);

// Peaks of the short-time RMS envelope above the detection threshold, kept
// greedily by amplitude so that accepted peaks are at least refractory_s
// apart. Returned in time order.
std::vector<FootstepEvent> detect_footsteps(const VibrationTrace& trace, const FeatureSpec& spec);

// Band amplitudes of the Hann-tapered window centred on the event peak. A
// window running past either end of the trace is zero padded.
FeatureVector extract_features(const VibrationTrace& trace, const FootstepEvent& event, const FeatureSpec& spec);

// One-sided power per FFT bin of an already tapered segment, normalised so
// that the bins sum to the segment energy.
std::vector<double> power_spectrum(std::span<const double> segment);

// Feature vectors for every detected footstep in the dataset. Labels come
// from the manifest and, for location, from the nearest ground-truth impulse.
// Ball-drop sessions are skipped unless include_ball_drops is set.
std::vector<FeatureVector> extract_all(const Dataset& dataset, const FeatureSpec& spec, bool include_ball_drops = false);

// extract_all followed by grouping. Throws DataError("no events detected")
// when nothing was found.
GroupedFeatures extract_dataset(const Dataset& dataset, const FeatureSpec& spec, GroupingMode mode,
                                bool include_ball_drops = false);

}  // namespace vibestep

#endif  // VIBESTEP_FEATURES_HPP
