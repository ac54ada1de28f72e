#include "vibestep/features.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

namespace vibestep {

namespace {

// Envelope smoothing length.
constexpr double kEnvelopeWindowS = 0.01;
// Peaks below this fraction of the loudest envelope peak are ignored even when
// the MAD floor is lower, which happens on noiseless traces.
constexpr double kMinRelativeThreshold = 0.05;
constexpr double kLogFloor = 1e-9;

std::vector<double> rms_envelope(std::span<const double> x, std::size_t half) {
  std::vector<double> prefix(x.size() + 1, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) prefix[i + 1] = prefix[i] + x[i] * x[i];
  std::vector<double> env(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t lo = i > half ? i - half : 0;
    const std::size_t hi = std::min(x.size(), i + half + 1);
    env[i] = std::sqrt(std::max(0.0, prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo));
  }
  return env;
}

}  // namespace

double noise_floor(std::span<const double> samples) {
  if (samples.empty()) return 0.0;
  std::vector<double> v(samples.begin(), samples.end());
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  const double median = *mid;
  for (auto& x : v) x = std::abs(x - median);
  std::nth_element(v.begin(), mid, v.end());
  return 1.4826 * *mid;
}

std::vector<FootstepEvent> detect_footsteps(const VibrationTrace& trace, const FeatureSpec& spec) {
  trace.validate();
  spec.validate();
  const auto& x = trace.samples;
  const auto half = static_cast<std::size_t>(std::max(1.0, std::round(0.5 * kEnvelopeWindowS * trace.sample_rate_hz)));
  const auto env = rms_envelope(x, half);
  const double peak_env = *std::max_element(env.begin(), env.end());
  if (!(peak_env > 0.0)) return {};
  const double threshold =
      std::max(spec.detection_threshold_sigma * noise_floor(x), kMinRelativeThreshold * peak_env);

  std::vector<std::size_t> candidates;
  for (std::size_t i = 1; i + 1 < env.size(); ++i) {
    if (env[i] > threshold && env[i] >= env[i - 1] && env[i] > env[i + 1]) candidates.push_back(i);
  }
  std::stable_sort(candidates.begin(), candidates.end(), [&](auto a, auto b) { return env[a] > env[b]; });

  const auto refractory = static_cast<std::size_t>(std::ceil(spec.refractory_s * trace.sample_rate_hz));
  const auto half_window = static_cast<std::size_t>(std::round(0.5 * spec.window_s * trace.sample_rate_hz));
  std::vector<std::size_t> accepted;
  for (auto c : candidates) {
    const bool clear = std::all_of(accepted.begin(), accepted.end(), [&](auto a) {
      return (a > c ? a - c : c - a) >= refractory;
    });
    if (clear) accepted.push_back(c);
  }
  std::sort(accepted.begin(), accepted.end());

  std::vector<FootstepEvent> events;
  for (auto p : accepted) {
    FootstepEvent e;
    e.trace_ref = trace.sensor_id;
    e.peak_index = p;
    e.start_index = p > half_window ? p - half_window : 0;
    e.end_index = std::min(x.size(), p + half_window);
    events.push_back(e);
  }
  return events;
}

std::vector<double> power_spectrum(std::span<const double> segment) {
  const std::size_t n = segment.size();
  std::vector<double> in(segment.begin(), segment.end());
  std::vector<std::complex<double>> spec;
  Eigen::FFT<double> fft;
  fft.fwd(spec, in);
  std::vector<double> p(n / 2 + 1);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < p.size(); ++k) {
    const bool unpaired = k == 0 || (n % 2 == 0 && k == n / 2);
    p[k] = std::norm(spec[k]) * inv_n * (unpaired ? 1.0 : 2.0);
  }
  return p;
}

FeatureVector extract_features(const VibrationTrace& trace, const FootstepEvent& event, const FeatureSpec& spec) {
  spec.validate();
  const double fs = trace.sample_rate_hz;
  if (spec.band_edges_hz.back() > 0.5 * fs * (1.0 + 1e-12)) {
    throw ConfigError("band edge " + std::to_string(spec.band_edges_hz.back()) + " Hz exceeds Nyquist");
  }
  const auto n = static_cast<std::size_t>(std::max(4.0, std::round(spec.window_s * fs)));
  const auto start = static_cast<std::ptrdiff_t>(event.peak_index) - static_cast<std::ptrdiff_t>(n / 2);

  std::vector<double> segment(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto src = start + static_cast<std::ptrdiff_t>(i);
    if (src < 0 || src >= static_cast<std::ptrdiff_t>(trace.samples.size())) continue;
    const double taper = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1)));
    segment[i] = taper * trace.samples[static_cast<std::size_t>(src)];
  }
  const auto power = power_spectrum(segment);

  const std::size_t d = spec.band_count();
  FeatureVector f;
  f.band_edges_hz = spec.band_edges_hz;
  f.values = VectorXd::Zero(static_cast<Eigen::Index>(d));
  const double bin_hz = fs / static_cast<double>(n);
  std::size_t band = 0;
  for (std::size_t k = 0; k < power.size(); ++k) {
    const double freq = static_cast<double>(k) * bin_hz;
    if (freq < spec.band_edges_hz.front()) continue;
    while (band < d && freq >= spec.band_edges_hz[band + 1]) ++band;
    if (band == d) {
      // the top edge closes the last band
      if (freq <= spec.band_edges_hz.back() * (1.0 + 1e-12)) f.values[static_cast<Eigen::Index>(d - 1)] += power[k];
      break;
    }
    f.values[static_cast<Eigen::Index>(band)] += power[k];
  }
  f.values = f.values.cwiseSqrt();
  if (spec.l2_normalize) {
    const double norm = f.values.norm();
    if (norm > 0.0) f.values /= norm;
  }
  if (spec.log_amplitude) {
    // floor relative to the strongest band keeps empty bands finite and
    // turns a global gain into a constant offset
    const double top = f.values.maxCoeff();
    if (top > 0.0) f.values = (f.values.array() + kLogFloor * top).log().matrix();
  }
  f.labels.sensor_id = trace.sensor_id;
  f.labels.time_s = static_cast<double>(event.peak_index) / fs;
  return f;
}

std::vector<FeatureVector> extract_all(const Dataset& dataset, const FeatureSpec& spec, bool include_ball_drops) {
  std::vector<FeatureVector> out;
  const auto& sessions = dataset.manifest.sessions;
  for (std::size_t s = 0; s < sessions.size(); ++s) {
    const auto& session = sessions[s];
    if (session.kind == ExcitationKind::BallDrop && !include_ball_drops) continue;
    for (const auto& trace : dataset.traces[s]) {
      for (const auto& event : detect_footsteps(trace, spec)) {
        auto f = extract_features(trace, event, spec);
        const double t = static_cast<double>(event.peak_index) / trace.sample_rate_hz;
        const GroundTruthStep* nearest = nullptr;
        for (const auto& gt : session.events) {
          if (!nearest || std::abs(gt.peak_time_s - t) < std::abs(nearest->peak_time_s - t)) nearest = &gt;
        }
        if (nearest && std::abs(nearest->peak_time_s - t) <= 0.5 * spec.window_s && !nearest->location_id.empty()) {
          f.labels.location_id = nearest->location_id;
        }
        if (!session.person_id.empty()) f.labels.person_id = session.person_id;
        f.labels.structure_id = session.structure_id;
        f.labels.session_id = session.session_id;
        f.labels.time_s = session.start_time_s + t;
        f.labels.excitation = to_string(session.kind);
        f.labels.protocol = session.protocol;
        out.push_back(std::move(f));
      }
    }
  }
  return out;
}

GroupedFeatures extract_dataset(const Dataset& dataset, const FeatureSpec& spec, GroupingMode mode,
                                bool include_ball_drops) {
  auto features = extract_all(dataset, spec, include_ball_drops);
  if (features.empty()) throw DataError("no events detected");
  return GroupedFeatures::group(features, mode);
}

}  // namespace vibestep
