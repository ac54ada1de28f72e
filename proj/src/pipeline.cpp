#include "vibestep/pipeline.hpp"

#include "vibestep/features.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

namespace vibestep {

std::string to_string(TransformScope scope) {
  return scope == TransformScope::PerStructure ? "per-structure" : "joint";
}

TransformScope transform_scope_from_string(const std::string& text) {
  if (text == "per-structure") return TransformScope::PerStructure;
  if (text == "joint") return TransformScope::Joint;
  throw ConfigError("unknown transform scope '" + text + "' (expected per-structure or joint)");
}

PipelineConfig PipelineConfig::defaults() {
  PipelineConfig c;
  c.experiment = ExperimentConfig::defaults();
  return c;
}

void PipelineConfig::validate() const {
  experiment.validate();
  online.validate();
  if (components && *components < 1) throw ConfigError("component count must be positive");
  if (gamma && *gamma < 0.0) throw ConfigError("ridge must be non-negative");
  if (seed_walks < 0) throw ConfigError("seed_walks must be non-negative");
}

std::vector<FeatureVector> select_features(std::span<const FeatureVector> features,
                                           const std::optional<std::string>& protocol,
                                           const std::optional<std::string>& excitation,
                                           const std::optional<std::string>& structure) {
  std::vector<FeatureVector> out;
  for (const auto& f : features) {
    if (protocol && f.labels.protocol != protocol) continue;
    if (excitation && f.labels.excitation != excitation) continue;
    if (structure && f.labels.structure_id != structure) continue;
    out.push_back(f);
  }
  return out;
}

std::vector<FeaturePart> partition(std::span<const FeatureVector> features, TransformScope scope) {
  if (scope == TransformScope::Joint) return {{"joint", {features.begin(), features.end()}}};
  std::map<std::string, std::vector<FeatureVector>> by_structure;
  for (const auto& f : features) {
    if (!f.labels.structure_id) throw DataError("feature without structure label");
    by_structure[*f.labels.structure_id].push_back(f);
  }
  std::vector<FeaturePart> out;
  for (auto& [key, list] : by_structure) out.push_back({key, std::move(list)});
  return out;
}

MatrixXd principal_scores(const MatrixXd& samples, Eigen::Index k) {
  const auto d = samples.cols();
  if (samples.rows() == 0 || d == 0) return MatrixXd::Zero(samples.rows(), k);
  const MatrixXd centered = samples.rowwise() - samples.colwise().mean();
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(centered.transpose() * centered);
  if (eig.info() != Eigen::Success) throw NumericalError("eigensolver did not converge");
  MatrixXd out = MatrixXd::Zero(samples.rows(), k);
  for (Eigen::Index j = 0; j < std::min(k, d); ++j) {
    VectorXd v = eig.eigenvectors().col(d - 1 - j);
    canonical_sign(v);
    out.col(j) = centered * v;
  }
  return out;
}

namespace {

MatrixXd rows_of(std::span<const FeatureVector> features) {
  MatrixXd m(static_cast<Eigen::Index>(features.size()), features.empty() ? 0 : features.front().dimension());
  for (std::size_t i = 0; i < features.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = features[i].values.transpose();
  return m;
}

std::size_t person_count(std::span<const FeatureVector> features) {
  std::set<std::string> persons;
  for (const auto& f : features) {
    if (f.labels.person_id) persons.insert(*f.labels.person_id);
  }
  return persons.size();
}

std::vector<FeatureVector> walks_only(std::span<const FeatureVector> features) {
  return select_features(features, std::string("walk"), std::string("footstep"));
}

}  // namespace

Decomposition decompose(std::span<const FeatureVector> features) {
  const auto grid = select_features(features, std::string("grid"));
  if (grid.empty()) throw DataError("no grid impulses to decompose");

  using Key = std::tuple<std::string, std::string, std::string>;
  std::map<Key, std::vector<FeatureVector>> by_key;
  std::map<std::pair<std::string, std::string>, std::vector<FeatureVector>> by_sensor;
  for (const auto& f : grid) {
    if (!f.labels.location_id) throw DataError("grid feature without location label");
    const auto structure = f.labels.structure_id.value_or("");
    const auto sensor = f.labels.sensor_id.value_or("");
    by_key[{structure, f.labels.excitation.value_or(""), sensor}].push_back(f);
    by_sensor[{structure, sensor}].push_back(f);
  }

  Decomposition out;
  for (const auto& [key, list] : by_key) {
    const auto grouped = GroupedFeatures::group(list, GroupingMode::ByLocation);
    DecompositionEntry e;
    std::tie(e.structure_id, e.excitation, e.sensor_id) = key;
    e.locations = grouped.group_count();
    e.samples = grouped.sample_count();
    const auto groups = grouped.matrices<double>();
    std::vector<std::string> names;
    for (const auto& g : grouped.groups) names.push_back(g.key);
    const auto footstep = footstep_covariance<double>(groups, names);
    // a single location has no between-location spread
    const MatrixXd structure = grouped.group_count() < 2 ? MatrixXd::Zero(footstep.rows(), footstep.cols())
                                                         : MatrixXd(structure_covariance<double>(groups));
    e.report = variability_proportion(footstep, structure);
    out.entries.push_back(std::move(e));
  }
  for (const auto& [key, list] : by_sensor) {
    const auto scores = principal_scores(rows_of(list), 2);
    for (std::size_t i = 0; i < list.size(); ++i) {
      const auto& l = list[i].labels;
      out.scatter.push_back({key.first, key.second, l.excitation.value_or(""), l.location_id.value_or(""),
                             scores(static_cast<Eigen::Index>(i), 0), scores(static_cast<Eigen::Index>(i), 1)});
    }
  }
  return out;
}

std::vector<PartTransform> fit_transforms(std::span<const FeatureVector> features, const PipelineConfig& config) {
  std::vector<PartTransform> out;
  for (const auto& part : partition(walks_only(features), config.scope)) {
    const auto grouped = GroupedFeatures::group(part.features, GroupingMode::ByPerson);
    if (grouped.group_count() < 2) throw DataError("fewer than 2 persons in " + part.key);
    out.push_back({part.key, fit(grouped, config.components, config.gamma)});
  }
  if (out.empty()) throw DataError("no walking footsteps to fit a transform on");
  return out;
}

VariabilityEvaluation evaluate_transform(const std::string& key, std::span<const FeatureVector> walk_features,
                                         const FisherTransform<double>& transform) {
  const auto grouped = GroupedFeatures::group(walk_features, GroupingMode::ByPerson);
  const auto before = grouped.matrices<double>();
  std::vector<MatrixXd> after;
  for (const auto& g : before) after.push_back(transform.apply_rows(g));

  VariabilityEvaluation e;
  e.key = key;
  e.persons = grouped.group_count();
  e.samples = grouped.sample_count();
  const auto b = scatter_traces<double>(before);
  const auto a = scatter_traces<double>(after);
  e.ratio_before = b.within / b.total;
  e.ratio_after = a.within / a.total;
  e.reduction = within_person_variability_ratio<double>(before, after);

  const MatrixXd all = rows_of(walk_features);
  e.projection_before = principal_scores(all, 2);
  const MatrixXd mapped = transform.apply_rows(all);
  e.projection_after = MatrixXd::Zero(all.rows(), 2);
  e.projection_after.leftCols(std::min<Eigen::Index>(2, mapped.cols())) =
      mapped.leftCols(std::min<Eigen::Index>(2, mapped.cols()));
  for (const auto& f : walk_features) e.labels.push_back(f.labels);
  return e;
}

OnlineStream make_stream(std::span<const FeatureVector> walk_features, int seed_walks) {
  std::vector<const FeatureVector*> ordered;
  for (const auto& f : walk_features) {
    if (!f.labels.person_id || !f.labels.session_id || !f.labels.time_s) {
      throw DataError("online identification needs person, session and time labels");
    }
    ordered.push_back(&f);
  }
  if (ordered.empty()) throw DataError("no walking footsteps to identify");
  std::stable_sort(ordered.begin(), ordered.end(), [](const FeatureVector* a, const FeatureVector* b) {
    return std::tie(*a->labels.time_s, *a->labels.session_id, a->labels.sensor_id) <
           std::tie(*b->labels.time_s, *b->labels.session_id, b->labels.sensor_id);
  });

  OnlineStream s;
  const auto* first = *std::min_element(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) {
    return *a->labels.person_id < *b->labels.person_id;
  });
  s.seed_person = *first->labels.person_id;
  for (const auto* f : ordered) {
    if (*f->labels.person_id != s.seed_person) continue;
    const auto& session = *f->labels.session_id;
    if (std::find(s.seed_sessions.begin(), s.seed_sessions.end(), session) != s.seed_sessions.end()) continue;
    if (seed_walks > 0 && static_cast<int>(s.seed_sessions.size()) >= seed_walks) break;
    s.seed_sessions.push_back(session);
  }
  const std::set<std::string> seeded(s.seed_sessions.begin(), s.seed_sessions.end());
  for (const auto* f : ordered) {
    if (seeded.count(*f->labels.session_id)) {
      s.seed.push_back(f->values);
    } else {
      s.stream.push_back({f->values, *f->labels.person_id, *f->labels.session_id});
    }
  }
  return s;
}

OnlineOutcome run_online(std::span<const FeatureVector> features, const PipelineConfig& config) {
  config.validate();
  OnlineOutcome out;
  for (auto& part : partition(walks_only(features), config.scope)) {
    if (person_count(part.features) < 2) throw DataError("fewer than 2 persons in " + part.key);
    auto stream = make_stream(part.features, config.seed_walks);
    const std::string seeded[] = {stream.seed_person};
    auto run = identify_adaptive(stream.seed, stream.stream, config.online, seeded);
    const auto grouped = GroupedFeatures::group(part.features, GroupingMode::ByPerson);
    const auto offline = fit(grouped, config.components, config.gamma);
    auto variability = evaluate_transform(part.key, part.features, offline);
    out.parts.push_back({part.key, std::move(stream), std::move(run), std::move(variability)});
  }
  if (out.parts.empty()) throw DataError("no walking footsteps to identify");
  for (const auto& p : out.parts) {
    out.mean_accuracy += p.run.report.accuracy;
    out.mean_reduction += p.variability.reduction;
  }
  out.mean_accuracy /= static_cast<double>(out.parts.size());
  out.mean_reduction /= static_cast<double>(out.parts.size());
  return out;
}

std::vector<FeatureVector> pipeline_features(const PipelineConfig& config) {
  const Dataset ds = config.dataset.empty() ? simulate_experiment(config.experiment) : load_dataset(config.dataset);
  auto features = extract_all(ds, config.experiment.features, true);
  if (features.empty()) throw DataError("no events detected");
  return features;
}

}  // namespace vibestep
