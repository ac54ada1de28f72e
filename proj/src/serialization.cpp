#include "vibestep/serialization.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace vibestep {

namespace fs = std::filesystem;

namespace {

// Rejects keys outside the allowed set so that typos in configuration files
// do not pass silently.
void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  std::set<std::string> names;
  for (const char* a : allowed) names.insert(a);
  for (const auto& [key, value] : j.items()) {
    if (!names.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read_into(const Json& j, const char* key, T& target) {
  if (j.contains(key)) target = j.at(key).get<T>();
}

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

Json matrix_to_json(const MatrixXd& m) {
  Json data = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

MatrixXd matrix_from_json(const Json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows * cols)) {
    throw DataError("matrix JSON: data length does not match rows x cols");
  }
  MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
  }
  return m;
}

Json vector_to_json(const VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

VectorXd vector_from_json(const Json& j) {
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

Json to_json(const FeatureSpec& spec) {
  return {{"window_s", spec.window_s},
          {"band_edges_hz", spec.band_edges_hz},
          {"detection_threshold_sigma", spec.detection_threshold_sigma},
          {"refractory_s", spec.refractory_s},
          {"l2_normalize", spec.l2_normalize},
          {"log_amplitude", spec.log_amplitude}};
}

FeatureSpec feature_spec_from_json(const Json& j, FeatureSpec base) {
  check_keys(j, {"window_s", "band_edges_hz", "detection_threshold_sigma", "refractory_s", "l2_normalize",
                 "log_amplitude"},
             "feature spec");
  read_into(j, "window_s", base.window_s);
  read_into(j, "band_edges_hz", base.band_edges_hz);
  read_into(j, "detection_threshold_sigma", base.detection_threshold_sigma);
  read_into(j, "refractory_s", base.refractory_s);
  read_into(j, "l2_normalize", base.l2_normalize);
  read_into(j, "log_amplitude", base.log_amplitude);
  return base;
}

Json to_json(const VariabilityReport& r) {
  return {{"dimension", r.sigma_footstep.rows()},
          {"footstep_trace", r.footstep_trace},
          {"structure_trace", r.structure_trace},
          {"footstep_share", r.footstep_share},
          {"structure_share", r.structure_share},
          {"sigma_footstep", matrix_to_json(r.sigma_footstep)},
          {"sigma_structure", matrix_to_json(r.sigma_structure)}};
}

VariabilityReport variability_report_from_json(const Json& j) {
  VariabilityReport r;
  r.sigma_footstep = matrix_from_json(j.at("sigma_footstep"));
  r.sigma_structure = matrix_from_json(j.at("sigma_structure"));
  r.footstep_trace = j.at("footstep_trace").get<double>();
  r.structure_trace = j.at("structure_trace").get<double>();
  r.footstep_share = j.at("footstep_share").get<double>();
  r.structure_share = j.at("structure_share").get<double>();
  return r;
}

Json to_json(const FisherTransform<double>& t) {
  return {{"input_dimension", t.input_dimension()},
          {"components", t.output_dimension()},
          {"class_count", t.class_count},
          {"gamma", t.gamma},
          {"degenerate", t.degenerate},
          {"eigenvalues", vector_to_json(t.eigenvalues)},
          {"w", matrix_to_json(t.w)}};
}

FisherTransform<double> fisher_transform_from_json(const Json& j) {
  FisherTransform<double> t;
  t.w = matrix_from_json(j.at("w"));
  t.eigenvalues = vector_from_json(j.at("eigenvalues"));
  t.gamma = j.at("gamma").get<double>();
  t.class_count = j.at("class_count").get<int>();
  t.degenerate = j.value("degenerate", false);
  if (t.eigenvalues.size() != t.w.cols()) throw DataError("transform JSON: eigenvalue count differs from components");
  return t;
}

Json to_json(const NiwPrior<double>& p) {
  return {{"mean", vector_to_json(p.mean)},
          {"kappa", p.kappa},
          {"dof", p.dof},
          {"scatter", matrix_to_json(p.scatter)}};
}

NiwPrior<double> niw_prior_from_json(const Json& j) {
  NiwPrior<double> p;
  p.mean = vector_from_json(j.at("mean"));
  p.kappa = j.at("kappa").get<double>();
  p.dof = j.at("dof").get<double>();
  p.scatter = matrix_from_json(j.at("scatter"));
  return p;
}

std::string to_string(AssignmentMode mode) {
  return mode == AssignmentMode::PerFootstep ? "per-footstep" : "per-trace-majority";
}

AssignmentMode assignment_mode_from_string(const std::string& text) {
  if (text == "per-footstep") return AssignmentMode::PerFootstep;
  if (text == "per-trace-majority") return AssignmentMode::PerTraceMajority;
  throw ConfigError("unknown assignment mode '" + text + "' (expected per-footstep or per-trace-majority)");
}

Json to_json(const DpmmModel<double>& model) {
  Json clusters = Json::array();
  for (const auto& c : model.clusters()) {
    clusters.push_back({{"id", c.id}, {"count", c.count}, {"sum", vector_to_json(c.sum)},
                        {"outer", matrix_to_json(c.outer)}});
  }
  Json log = Json::array();
  for (const auto& r : model.log()) log.push_back({{"cluster", r.cluster}, {"x", vector_to_json(r.x)}});
  return {{"config",
           {{"alpha", model.config().alpha},
            {"assignment_mode", to_string(model.config().mode)},
            {"prior", to_json(model.config().prior)}}},
          {"total_count", model.total_count()},
          {"clusters", clusters},
          {"log", log}};
}

DpmmModel<double> dpmm_model_from_json(const Json& j) {
  DpmmConfig<double> config;
  const auto& c = j.at("config");
  config.alpha = c.at("alpha").get<double>();
  config.mode = assignment_mode_from_string(c.at("assignment_mode").get<std::string>());
  config.prior = niw_prior_from_json(c.at("prior"));
  std::vector<AssignmentRecord<double>> log;
  for (const auto& r : j.at("log")) log.push_back({vector_from_json(r.at("x")), r.at("cluster").get<int>()});
  auto model = DpmmModel<double>::replay(std::move(config), log);

  const auto& stored = j.at("clusters");
  if (stored.size() != model.clusters().size()) throw DataError("checkpoint cluster list disagrees with its log");
  for (std::size_t i = 0; i < stored.size(); ++i) {
    const auto& s = stored[i];
    const auto& m = model.clusters()[i];
    if (s.at("id").get<int>() != m.id || s.at("count").get<Eigen::Index>() != m.count ||
        vector_from_json(s.at("sum")) != m.sum || matrix_from_json(s.at("outer")) != m.outer) {
      throw DataError("checkpoint statistics disagree with its log for cluster " + std::to_string(m.id));
    }
  }
  if (j.at("total_count").get<Eigen::Index>() != model.total_count()) {
    throw DataError("checkpoint total count disagrees with its log");
  }
  return model;
}

Json to_json(const OnlineRunReport& r) {
  Json mapping = Json::object();
  for (const auto& [cluster, person] : r.cluster_to_person) mapping[std::to_string(cluster)] = person;
  Json newcomers = Json::array();
  for (const auto& n : r.newcomers) {
    newcomers.push_back({{"sample_index", n.sample_index},
                         {"cluster", n.cluster_id},
                         {"true_person", n.true_person},
                         {"person_was_unseen", n.person_was_unseen}});
  }
  return {{"accuracy", r.accuracy},
          {"total_samples", r.total_samples},
          {"correct_samples", r.correct_samples},
          {"seed_samples", r.seed_samples},
          {"cluster_count", r.cluster_count},
          {"person_count", r.person_count},
          {"cluster_to_person", mapping},
          {"newcomers", newcomers},
          {"assignments", r.assignments}};
}

namespace {

std::string to_string(SensorQuantity q) { return q == SensorQuantity::Velocity ? "velocity" : "displacement"; }

SensorQuantity sensor_quantity_from_string(const std::string& text) {
  if (text == "velocity") return SensorQuantity::Velocity;
  if (text == "displacement") return SensorQuantity::Displacement;
  throw ConfigError("unknown sensor quantity '" + text + "' (expected velocity or displacement)");
}

std::string to_string(RefitPolicy p) { return p == RefitPolicy::OnConfirmedNewcomer ? "on-confirmed-newcomer" : "never"; }

RefitPolicy refit_policy_from_string(const std::string& text) {
  if (text == "on-confirmed-newcomer") return RefitPolicy::OnConfirmedNewcomer;
  if (text == "never") return RefitPolicy::Never;
  throw ConfigError("unknown refit policy '" + text + "' (expected on-confirmed-newcomer or never)");
}

std::string to_string(PriorSpread p) { return p == PriorSpread::PerCoordinate ? "per-coordinate" : "pairwise-median"; }

PriorSpread prior_spread_from_string(const std::string& text) {
  if (text == "per-coordinate") return PriorSpread::PerCoordinate;
  if (text == "pairwise-median") return PriorSpread::PairwiseMedian;
  throw ConfigError("unknown prior spread '" + text + "' (expected per-coordinate or pairwise-median)");
}

Json to_json(const StructureConfig& s) {
  return {{"id", s.id},
          {"material", s.material},
          {"youngs_modulus_pa", s.beam.youngs_modulus_pa},
          {"second_moment_m4", s.beam.second_moment_m4},
          {"density_kg_m3", s.beam.density_kg_m3},
          {"area_m2", s.beam.area_m2},
          {"damping_per_s", s.beam.damping_per_s},
          {"length_m", s.beam.length_m},
          {"n_modes", s.beam.n_modes},
          {"attenuation_alpha", s.attenuation.alpha}};
}

StructureConfig structure_from_json(const Json& j) {
  check_keys(j, {"id", "material", "youngs_modulus_pa", "second_moment_m4", "density_kg_m3", "area_m2",
                 "damping_per_s", "length_m", "n_modes", "attenuation_alpha"},
             "structure");
  StructureConfig s;
  if (j.contains("id")) {
    const auto id = j.at("id").get<std::string>();
    if (id == "wood") s = wood_structure();
    if (id == "concrete") s = concrete_structure();
    s.id = id;
  } else {
    throw ConfigError("structure needs an id");
  }
  read_into(j, "material", s.material);
  read_into(j, "youngs_modulus_pa", s.beam.youngs_modulus_pa);
  read_into(j, "second_moment_m4", s.beam.second_moment_m4);
  read_into(j, "density_kg_m3", s.beam.density_kg_m3);
  read_into(j, "area_m2", s.beam.area_m2);
  read_into(j, "damping_per_s", s.beam.damping_per_s);
  read_into(j, "length_m", s.beam.length_m);
  read_into(j, "n_modes", s.beam.n_modes);
  read_into(j, "attenuation_alpha", s.attenuation.alpha);
  return s;
}

Json to_json(const SimulationSettings& s) {
  return {{"sample_rate_hz", s.sample_rate_hz},
          {"lead_in_s", s.lead_in_s},
          {"tail_s", s.tail_s},
          {"noise_std", s.noise_std},
          {"edge_margin_m", s.edge_margin_m},
          {"quantity", to_string(s.quantity)}};
}

SimulationSettings simulation_from_json(const Json& j, SimulationSettings s) {
  check_keys(j, {"sample_rate_hz", "lead_in_s", "tail_s", "noise_std", "edge_margin_m", "quantity"}, "simulation");
  read_into(j, "sample_rate_hz", s.sample_rate_hz);
  read_into(j, "lead_in_s", s.lead_in_s);
  read_into(j, "tail_s", s.tail_s);
  read_into(j, "noise_std", s.noise_std);
  read_into(j, "edge_margin_m", s.edge_margin_m);
  if (j.contains("quantity")) s.quantity = sensor_quantity_from_string(j.at("quantity").get<std::string>());
  return s;
}

}  // namespace

Json to_json(const ExperimentConfig& c) {
  Json structures = Json::array();
  for (const auto& s : c.structures) structures.push_back(to_json(s));
  return {{"structures", structures},
          {"persons", c.persons},
          {"walks", c.walks},
          {"sensor_positions_m", c.sensor_positions_m},
          {"simulation", to_json(c.simulation)},
          {"grid_locations", c.grid_locations},
          {"grid_repeats", c.grid_repeats},
          {"seed", c.seed},
          {"features", to_json(c.features)}};
}

ExperimentConfig experiment_config_from_json(const Json& j, ExperimentConfig c) {
  check_keys(j, {"structures", "persons", "walks", "sensor_positions_m", "simulation", "grid_locations",
                 "grid_repeats", "seed", "features"},
             "experiment");
  if (j.contains("structures")) {
    c.structures.clear();
    for (const auto& s : j.at("structures")) c.structures.push_back(structure_from_json(s));
  }
  read_into(j, "persons", c.persons);
  read_into(j, "walks", c.walks);
  read_into(j, "sensor_positions_m", c.sensor_positions_m);
  if (j.contains("simulation")) c.simulation = simulation_from_json(j.at("simulation"), c.simulation);
  read_into(j, "grid_locations", c.grid_locations);
  read_into(j, "grid_repeats", c.grid_repeats);
  read_into(j, "seed", c.seed);
  if (j.contains("features")) c.features = feature_spec_from_json(j.at("features"), c.features);
  return c;
}

Json to_json(const AdaptiveOptions& o) {
  return {{"use_transform", o.use_transform},
          {"refit", to_string(o.refit)},
          {"confirm_count", o.confirm_count},
          {"gamma", optional_number(o.gamma)},
          {"alpha", o.alpha},
          {"assignment_mode", to_string(o.mode)},
          {"prior_spread", to_string(o.prior_spread)}};
}

AdaptiveOptions adaptive_options_from_json(const Json& j, AdaptiveOptions o) {
  check_keys(j, {"use_transform", "refit", "confirm_count", "gamma", "alpha", "assignment_mode", "prior_spread"},
             "online");
  read_into(j, "use_transform", o.use_transform);
  if (j.contains("refit")) o.refit = refit_policy_from_string(j.at("refit").get<std::string>());
  read_into(j, "confirm_count", o.confirm_count);
  if (j.contains("gamma")) {
    o.gamma = j.at("gamma").is_null() ? std::nullopt : std::optional<double>(j.at("gamma").get<double>());
  }
  read_into(j, "alpha", o.alpha);
  if (j.contains("assignment_mode")) o.mode = assignment_mode_from_string(j.at("assignment_mode").get<std::string>());
  if (j.contains("prior_spread")) o.prior_spread = prior_spread_from_string(j.at("prior_spread").get<std::string>());
  return o;
}

Json to_json(const PipelineConfig& c) {
  return {{"experiment", to_json(c.experiment)},
          {"components", c.components ? Json(*c.components) : Json(nullptr)},
          {"gamma", optional_number(c.gamma)},
          {"scope", to_string(c.scope)},
          {"seed_walks", c.seed_walks},
          {"online", to_json(c.online)}};
}

PipelineConfig pipeline_config_from_json(const Json& j, PipelineConfig c) {
  check_keys(j, {"dataset", "output_dir", "experiment", "components", "gamma", "scope", "seed_walks", "online"},
             "pipeline config");
  if (j.contains("dataset")) c.dataset = j.at("dataset").get<std::string>();
  if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("experiment")) c.experiment = experiment_config_from_json(j.at("experiment"), c.experiment);
  if (j.contains("components")) {
    c.components = j.at("components").is_null() ? std::nullopt
                                                : std::optional<Eigen::Index>(j.at("components").get<Eigen::Index>());
  }
  if (j.contains("gamma")) {
    c.gamma = j.at("gamma").is_null() ? std::nullopt : std::optional<double>(j.at("gamma").get<double>());
  }
  if (j.contains("scope")) c.scope = transform_scope_from_string(j.at("scope").get<std::string>());
  read_into(j, "seed_walks", c.seed_walks);
  if (j.contains("online")) c.online = adaptive_options_from_json(j.at("online"), c.online);
  return c;
}

Json to_json(const Decomposition& d) {
  Json entries = Json::array();
  for (const auto& e : d.entries) {
    entries.push_back({{"structure_id", e.structure_id},
                       {"excitation", e.excitation},
                       {"sensor_id", e.sensor_id},
                       {"locations", e.locations},
                       {"samples", e.samples},
                       {"report", to_json(e.report)}});
  }
  return entries;
}

Json to_json(const VariabilityEvaluation& e) {
  return {{"key", e.key},
          {"persons", e.persons},
          {"samples", e.samples},
          {"ratio_before", e.ratio_before},
          {"ratio_after", e.ratio_after},
          {"reduction", e.reduction}};
}

void write_json(const Json& j, const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw ConfigError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw ConfigError("cannot write " + path.string());
}

Json read_json(const fs::path& path) {
  if (!fs::exists(path)) throw MissingFileError(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n'));
    throw MalformedFileError(path, line, e.what());
  }
}

}  // namespace vibestep
