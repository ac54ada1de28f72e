#include "vibestep/data_model.hpp"
#include "vibestep/experiment.hpp"
#include "vibestep/features.hpp"
#include "vibestep/online.hpp"
#include "vibestep/pipeline.hpp"
#include "vibestep/serialization.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

namespace fs = std::filesystem;
using namespace vibestep;

namespace {

constexpr const char* kVersion = "0.1.0";

// Flags shared by every subcommand. Unset flags leave the configuration file
// values alone.
struct Options {
  std::string config;
  std::string out;
  std::string dataset;
  std::string features;
  std::string transform;
  std::optional<std::uint64_t> seed;
  std::optional<int> persons;
  std::optional<int> walks;
  std::optional<int> grid_locations;
  std::optional<int> grid_repeats;
  std::optional<Eigen::Index> components;
  std::optional<double> gamma;
  std::optional<std::string> scope;
  std::optional<double> alpha;
  std::optional<int> confirm_count;
  std::optional<int> seed_walks;
  std::optional<std::string> assignment_mode;
  bool no_transform = false;
};

PipelineConfig load_config(const Options& o) {
  PipelineConfig c = PipelineConfig::defaults();
  if (!o.config.empty()) {
    if (!fs::exists(o.config)) throw ConfigError("config file not found: " + o.config);
    try {
      c = pipeline_config_from_json(read_json(o.config));
    } catch (const MalformedFileError& e) {
      throw ConfigError(e.what());
    } catch (const Json::exception& e) {
      throw ConfigError(std::string("invalid config ") + o.config + ": " + e.what());
    }
  }
  if (!o.dataset.empty()) c.dataset = o.dataset;
  if (!o.out.empty()) c.output_dir = o.out;
  if (o.seed) c.experiment.seed = *o.seed;
  if (o.persons) c.experiment.persons = *o.persons;
  if (o.walks) c.experiment.walks = *o.walks;
  if (o.grid_locations) c.experiment.grid_locations = *o.grid_locations;
  if (o.grid_repeats) c.experiment.grid_repeats = *o.grid_repeats;
  if (o.components) c.components = *o.components;
  if (o.gamma) {
    c.gamma = *o.gamma;
    c.online.gamma = *o.gamma;
  }
  if (o.scope) c.scope = transform_scope_from_string(*o.scope);
  if (o.alpha) c.online.alpha = *o.alpha;
  if (o.confirm_count) c.online.confirm_count = *o.confirm_count;
  if (o.seed_walks) c.seed_walks = *o.seed_walks;
  if (o.assignment_mode) c.online.mode = assignment_mode_from_string(*o.assignment_mode);
  if (o.no_transform) c.online.use_transform = false;
  if (c.output_dir.empty()) throw ConfigError("--out is required");
  c.validate();
  return c;
}

fs::path prepare_out(const PipelineConfig& c) {
  std::error_code ec;
  fs::create_directories(c.output_dir, ec);
  if (ec || !fs::is_directory(c.output_dir)) {
    throw ConfigError("cannot create output directory " + c.output_dir.string());
  }
  return c.output_dir;
}

// Features from --features, else from the configured dataset, else simulated.
std::vector<FeatureVector> input_features(const Options& o, const PipelineConfig& c) {
  if (!o.features.empty()) return load_features(o.features);
  return pipeline_features(c);
}

std::ofstream open_csv(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

void write_scatter(const Decomposition& d, const fs::path& path) {
  auto out = open_csv(path);
  out << "structure_id,sensor_id,excitation,location_id,pc1,pc2\n";
  for (const auto& p : d.scatter) {
    out << p.structure_id << ',' << p.sensor_id << ',' << p.excitation << ',' << p.location_id << ','
        << format_double(p.pc1) << ',' << format_double(p.pc2) << '\n';
  }
}

void write_projections(std::span<const VariabilityEvaluation> evals, const fs::path& dir) {
  auto before = open_csv(dir / "projection_before.csv");
  auto after = open_csv(dir / "projection_after.csv");
  before << "part,person_id,structure_id,session_id,sensor_id,pc1,pc2\n";
  after << "part,person_id,structure_id,session_id,sensor_id,fd1,fd2\n";
  for (const auto& e : evals) {
    for (std::size_t i = 0; i < e.labels.size(); ++i) {
      const auto& l = e.labels[i];
      const auto r = static_cast<Eigen::Index>(i);
      const std::string prefix = e.key + ',' + l.person_id.value_or("") + ',' + l.structure_id.value_or("") + ',' +
                                 l.session_id.value_or("") + ',' + l.sensor_id.value_or("") + ',';
      before << prefix << format_double(e.projection_before(r, 0)) << ',' << format_double(e.projection_before(r, 1))
             << '\n';
      after << prefix << format_double(e.projection_after(r, 0)) << ',' << format_double(e.projection_after(r, 1))
            << '\n';
    }
  }
}

Json run_json(const std::string& key, const OnlineStream& stream, const AdaptiveRun& run) {
  Json refits = Json::array();
  for (const auto& r : run.refits) refits.push_back({{"sample_index", r.sample_index}, {"class_count", r.class_count}});
  return {{"key", key},
          {"seed_person", stream.seed_person},
          {"seed_sessions", stream.seed_sessions},
          {"seed_samples", stream.seed.size()},
          {"stream_samples", stream.stream.size()},
          {"transform_refits", refits},
          {"final_transform_components", run.transform.output_dimension()},
          {"identification", to_json(run.report)}};
}

Json evaluations_json(std::span<const VariabilityEvaluation> evals) {
  Json parts = Json::array();
  double mean = 0.0;
  for (const auto& e : evals) {
    parts.push_back(to_json(e));
    mean += e.reduction;
  }
  if (!evals.empty()) mean /= static_cast<double>(evals.size());
  return {{"parts", parts}, {"mean_reduction", mean}};
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Timestamps and timings live here so that every other output is a pure
// function of configuration and input.
void write_metadata(const fs::path& dir, const std::string& command, const std::string& started,
                    std::chrono::steady_clock::time_point t0) {
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_json({{"command", command},
              {"version", kVersion},
              {"started_utc", started},
              {"finished_utc", utc_now()},
              {"elapsed_s", seconds},
              {"threads", worker_threads()}},
             dir / "metadata.json");
}

fs::path cmd_simulate(const Options& o) {
  const auto c = load_config(o);
  const auto dir = prepare_out(c);
  const auto dataset = simulate_experiment(c.experiment);
  const auto manifest = write_dataset(dataset, dir);
  std::cout << manifest.string() << '\n';
  return dir;
}

fs::path cmd_extract(const Options& o) {
  const auto c = load_config(o);
  const auto dir = prepare_out(c);
  const auto features = pipeline_features(c);
  save_features(features, dir / "features.csv");
  std::cout << features.size() << " feature vectors\n";
  return dir;
}

fs::path cmd_decompose(const Options& o) {
  const auto c = load_config(o);
  const auto dir = prepare_out(c);
  const auto d = decompose(input_features(o, c));
  write_json({{"decomposition", to_json(d)}}, dir / "variability.json");
  write_scatter(d, dir / "scatter_decompose.csv");
  return dir;
}

fs::path cmd_fit_transform(const Options& o) {
  const auto c = load_config(o);
  const auto dir = prepare_out(c);
  Json parts = Json::array();
  for (const auto& p : fit_transforms(input_features(o, c), c)) {
    parts.push_back({{"key", p.key}, {"transform", to_json(p.transform)}});
  }
  write_json({{"scope", to_string(c.scope)}, {"parts", parts}}, dir / "transform.json");
  return dir;
}

std::map<std::string, FisherTransform<double>> load_transforms(const std::string& path, TransformScope scope) {
  const auto j = read_json(path);
  if (j.at("scope").get<std::string>() != to_string(scope)) {
    throw ConfigError("transform file scope '" + j.at("scope").get<std::string>() + "' differs from configured scope");
  }
  std::map<std::string, FisherTransform<double>> out;
  for (const auto& p : j.at("parts")) out[p.at("key").get<std::string>()] = fisher_transform_from_json(p.at("transform"));
  return out;
}

const FisherTransform<double>& transform_for(const std::map<std::string, FisherTransform<double>>& transforms,
                                              const std::string& key) {
  const auto it = transforms.find(key);
  if (it == transforms.end()) throw DataError("transform file has no part '" + key + "'");
  return it->second;
}

// With --transform the given fixed transform is applied and the online
// transform learning is switched off.
fs::path cmd_identify(const Options& o) {
  auto c = load_config(o);
  const auto dir = prepare_out(c);
  std::map<std::string, FisherTransform<double>> fixed;
  if (!o.transform.empty()) {
    fixed = load_transforms(o.transform, c.scope);
    c.online.use_transform = false;
  }
  const auto walks = select_features(input_features(o, c), std::string("walk"), std::string("footstep"));
  Json parts = Json::array();
  Json models = Json::array();
  double mean = 0.0;
  const auto split = partition(walks, c.scope);
  for (auto part : split) {
    if (!fixed.empty()) {
      const auto& t = transform_for(fixed, part.key);
      for (auto& f : part.features) f.values = t.apply(f.values);
    }
    const auto stream = make_stream(part.features, c.seed_walks);
    const std::string seeded[] = {stream.seed_person};
    const auto run = identify_adaptive(stream.seed, stream.stream, c.online, seeded);
    parts.push_back(run_json(part.key, stream, run));
    models.push_back({{"key", part.key}, {"transform", to_json(run.transform)}, {"model", to_json(run.model)}});
    mean += run.report.accuracy;
  }
  if (split.empty()) throw DataError("no walking footsteps to identify");
  mean /= static_cast<double>(split.size());
  write_json({{"config", to_json(c)}, {"parts", parts}, {"mean_accuracy", mean}}, dir / "report.json");
  write_json({{"parts", models}}, dir / "model.json");
  return dir;
}

fs::path cmd_evaluate(const Options& o) {
  const auto c = load_config(o);
  const auto dir = prepare_out(c);
  if (o.transform.empty()) throw ConfigError("evaluate needs --transform");
  const auto transforms = load_transforms(o.transform, c.scope);
  const auto walks = select_features(input_features(o, c), std::string("walk"), std::string("footstep"));
  std::vector<VariabilityEvaluation> evals;
  for (const auto& part : partition(walks, c.scope)) {
    evals.push_back(evaluate_transform(part.key, part.features, transform_for(transforms, part.key)));
  }
  if (evals.empty()) throw DataError("no walking footsteps to evaluate");
  write_json({{"walks", evaluations_json(evals)}}, dir / "variability.json");
  write_projections(evals, dir);
  return dir;
}

fs::path cmd_run_online(const Options& o) {
  const auto c = load_config(o);
  const auto dir = prepare_out(c);
  const auto features = input_features(o, c);

  Decomposition d;
  if (!select_features(features, std::string("grid")).empty()) d = decompose(features);
  const auto outcome = run_online(features, c);

  Json parts = Json::array();
  std::vector<VariabilityEvaluation> evals;
  for (const auto& p : outcome.parts) {
    parts.push_back(run_json(p.key, p.stream, p.run));
    evals.push_back(p.variability);
  }
  write_json({{"config", to_json(c)}, {"parts", parts}, {"mean_accuracy", outcome.mean_accuracy},
              {"mean_reduction", outcome.mean_reduction}},
             dir / "report.json");
  write_json({{"decomposition", to_json(d)}, {"walks", evaluations_json(evals)}}, dir / "variability.json");
  write_scatter(d, dir / "scatter_decompose.csv");
  write_projections(evals, dir);
  return dir;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Data: return 3;
    case ErrorKind::Numerical: return 4;
  }
  return 1;
}

int fail(const std::string& kind, const std::string& message, int code) {
  std::cerr << Json{{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}}.dump() << '\n';
  return code;
}

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "pipeline configuration JSON");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--dataset", o.dataset, "dataset manifest; simulated when absent");
  cmd->add_option("--seed", o.seed, "simulation seed");
  cmd->add_option("--persons", o.persons, "simulated persons per structure");
  cmd->add_option("--walks", o.walks, "simulated walks per person and structure");
  cmd->add_option("--grid-locations", o.grid_locations, "grid excitation locations per structure");
  cmd->add_option("--grid-repeats", o.grid_repeats, "impulses per grid location and kind");
  cmd->add_option("--scope", o.scope, "per-structure or joint");
}

void add_features(CLI::App* cmd, Options& o) {
  cmd->add_option("--features", o.features, "feature CSV written by extract");
}

void add_online(CLI::App* cmd, Options& o) {
  cmd->add_option("--alpha", o.alpha, "CRP concentration");
  cmd->add_option("--confirm-count", o.confirm_count, "samples that confirm a new person");
  cmd->add_option("--seed-walks", o.seed_walks, "walks of the seed person given up front (0 = all)");
  cmd->add_option("--assignment-mode", o.assignment_mode, "per-footstep or per-trace-majority");
  cmd->add_flag("--no-transform", o.no_transform, "identify on raw features without any transform");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Person identification from footstep-induced floor vibration"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Options o;

  auto* simulate = app.add_subcommand("simulate", "simulate a dataset (manifest.json and traces/)");
  add_common(simulate, o);
  auto* extract = app.add_subcommand("extract", "detect footsteps and write features.csv");
  add_common(extract, o);
  auto* decomp = app.add_subcommand("decompose", "variability.json and scatter_decompose.csv from grid impulses");
  add_common(decomp, o);
  add_features(decomp, o);
  auto* fit = app.add_subcommand("fit-transform", "fit the discriminant transform on labelled walks");
  add_common(fit, o);
  add_features(fit, o);
  fit->add_option("--components", o.components, "transform components");
  fit->add_option("--gamma", o.gamma, "ridge added to the within scatter");
  auto* identify = app.add_subcommand("identify", "online identification; report.json and model.json");
  add_common(identify, o);
  add_features(identify, o);
  add_online(identify, o);
  identify->add_option("--transform", o.transform, "fixed transform.json to apply");
  identify->add_option("--gamma", o.gamma, "ridge added to the within scatter");
  auto* evaluate = app.add_subcommand("evaluate", "within-person variability before and after a transform");
  add_common(evaluate, o);
  add_features(evaluate, o);
  evaluate->add_option("--transform", o.transform, "transform.json from fit-transform")->required();
  auto* online = app.add_subcommand("run-online", "simulate or load, decompose, identify and evaluate");
  add_common(online, o);
  add_features(online, o);
  add_online(online, o);
  online->add_option("--components", o.components, "offline transform components");
  online->add_option("--gamma", o.gamma, "ridge added to the within scatter");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("config", e.what(), 2);
  }

  const std::map<CLI::App*, fs::path (*)(const Options&)> commands{
      {simulate, cmd_simulate}, {extract, cmd_extract},   {decomp, cmd_decompose}, {fit, cmd_fit_transform},
      {identify, cmd_identify}, {evaluate, cmd_evaluate}, {online, cmd_run_online}};
  auto* chosen = app.get_subcommands().front();
  const auto started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const auto dir = commands.at(chosen)(o);
    write_metadata(dir, chosen->get_name(), started, t0);
  } catch (const Error& e) {
    return fail(to_string(e.kind()), e.what(), exit_code(e.kind()));
  } catch (const Json::exception& e) {
    return fail("data", e.what(), 3);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
