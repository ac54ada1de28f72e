#include "vibestep/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <random>
#include <thread>

namespace vibestep {

namespace fs = std::filesystem;

namespace {

std::uint64_t mix(std::uint64_t x) {
  // splitmix64 finaliser
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  return mix(mix(mix(mix(seed) ^ a) ^ b) ^ c);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const unsigned workers = std::min<unsigned>(worker_threads(), static_cast<unsigned>(std::max<std::size_t>(n, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::jthread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          body(i);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

std::string sensor_file(const std::string& session, const std::string& sensor) {
  return "traces/" + session + "_" + sensor + ".csv";
}

struct Job {
  Session session;
  std::string grid_location;
  std::function<WalkSimulation()> run;
};

}  // namespace

unsigned worker_threads() {
  if (const char* env = std::getenv("VIBESTEP_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

StructureConfig wood_structure() {
  StructureConfig s;
  s.id = "wood";
  s.material = "wood";
  s.beam = BeamModel{1.1e10, 8.0e-4, 500.0, 0.6, 32.0, 7.0, 20};
  s.attenuation.alpha = 4.0e-4;
  return s;
}

StructureConfig concrete_structure() {
  StructureConfig s;
  s.id = "concrete";
  s.material = "concrete";
  s.beam = BeamModel{3.0e10, 2.0e-3, 2400.0, 0.5, 28.0, 7.0, 20};
  s.attenuation.alpha = 2.0e-4;
  return s;
}

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  c.structures = {wood_structure(), concrete_structure()};
  c.features = FeatureSpec::defaults(c.simulation.sample_rate_hz, 32, 20.0);
  c.features.log_amplitude = true;
  return c;
}

void ExperimentConfig::validate() const {
  if (structures.empty()) throw ConfigError("experiment needs at least one structure");
  if (persons < 1) throw ConfigError("experiment needs at least one person");
  if (walks < 1) throw ConfigError("empty experiment: walks must be at least 1");
  if (sensor_positions_m.empty()) throw ConfigError("experiment needs at least one sensor");
  if (grid_locations < 0 || grid_repeats < 0) throw ConfigError("grid sizes must be non-negative");
  if (!(simulation.sample_rate_hz > 0.0)) throw ConfigError("sample rate must be positive");
  for (const auto& s : structures) {
    s.beam.validate();
    for (double x : sensor_positions_m) {
      if (!(x > 0.0 && x < s.beam.length_m)) throw ConfigError("sensor outside structure " + s.id);
    }
  }
  features.validate();
}

std::string person_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "p%02d", index + 1);
  return buf;
}

std::vector<PersonGaitModel> make_population(int persons, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 0x9a17));
  std::vector<int> strata(static_cast<std::size_t>(persons));
  std::iota(strata.begin(), strata.end(), 0);
  std::shuffle(strata.begin(), strata.end(), rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<PersonGaitModel> out;
  for (int i = 0; i < persons; ++i) {
    PersonGaitModel g;
    g.person_id = person_id(i);
    const double u = 0.25 + 0.5 * unit(rng);
    g.pulse.duration_s = 0.030 + 0.060 * (strata[static_cast<std::size_t>(i)] + u) / persons;
    g.pulse.toe_delay_frac = 0.35 + 0.3 * unit(rng);
    g.pulse.toe_ratio = 0.4 + 0.5 * unit(rng);
    g.step_length_m = 0.6 + 0.2 * unit(rng);
    g.cadence_hz = 1.6 + 0.4 * unit(rng);
    g.base_amplitude_n = 600.0 + 300.0 * unit(rng);
    out.push_back(g);
  }
  return out;
}

Dataset simulate_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto population = make_population(config.persons, config.seed);
  SensorLayout sensors{config.sensor_positions_m};

  std::vector<Job> jobs;
  for (std::size_t si = 0; si < config.structures.size(); ++si) {
    const auto& st = config.structures[si];
    const double lo = config.simulation.edge_margin_m;

    // recording schedule: all walks of this structure in a seeded random order
    std::vector<std::pair<int, int>> order;
    for (int p = 0; p < config.persons; ++p) {
      for (int w = 0; w < config.walks; ++w) order.emplace_back(p, w);
    }
    std::mt19937_64 schedule_rng(derive_seed(config.seed, 0x5c4e, si));
    std::shuffle(order.begin(), order.end(), schedule_rng);

    for (std::size_t slot = 0; slot < order.size(); ++slot) {
      const auto [p, w] = order[slot];
      const auto& gait = population[static_cast<std::size_t>(p)];
      Job job;
      job.session.session_id = st.id + "_" + gait.person_id + "_w" + std::to_string(w + 1);
      job.session.kind = ExcitationKind::Footstep;
      job.session.person_id = gait.person_id;
      job.session.structure_id = st.id;
      job.session.protocol = "walk";
      job.session.start_time_s = 30.0 * static_cast<double>(slot);
      const auto seed = derive_seed(config.seed, 1 + si, static_cast<std::uint64_t>(p), static_cast<std::uint64_t>(w));
      std::mt19937_64 start_rng(derive_seed(seed, 0x57a7));
      const double start = lo + gait.step_length_m * std::uniform_real_distribution<double>(0.0, 1.0)(start_rng);
      job.run = [&st, &gait, sensors, seed, start, settings = config.simulation] {
        return simulate_walk(st.beam, st.attenuation, gait, sensors, start, seed, settings);
      };
      jobs.push_back(std::move(job));
    }

    const auto grid = location_grid(st.beam, std::max(config.grid_locations, 1));
    for (int li = 0; li < config.grid_locations; ++li) {
      for (int r = 0; r < config.grid_repeats; ++r) {
        const double x = grid[static_cast<std::size_t>(li)];
        const std::string loc = "loc" + std::to_string(li + 1);
        const double t0 = 30.0 * static_cast<double>(order.size()) + 5.0 * (li * config.grid_repeats + r);
        {
          Job job;
          job.session.session_id = st.id + "_drop_" + loc + "_r" + std::to_string(r + 1);
          job.session.kind = ExcitationKind::BallDrop;
          job.session.structure_id = st.id;
          job.session.protocol = "grid";
          job.grid_location = loc;
          job.session.start_time_s = t0;
          const auto seed = derive_seed(config.seed, 100 + si, static_cast<std::uint64_t>(li), static_cast<std::uint64_t>(r));
          job.run = [&st, sensors, seed, x, settings = config.simulation] {
            const double at[] = {x};
            return std::move(ball_drop_sequence(st.beam, st.attenuation, at, 1, sensors, seed, {}, settings)
                                 .front()
                                 .simulation);
          };
          jobs.push_back(std::move(job));
        }
        {
          Job job;
          const auto& gait = population.front();
          job.session.session_id = st.id + "_step_" + loc + "_r" + std::to_string(r + 1);
          job.session.kind = ExcitationKind::Footstep;
          job.session.person_id = gait.person_id;
          job.session.structure_id = st.id;
          job.session.protocol = "grid";
          job.grid_location = loc;
          job.session.start_time_s = t0 + 2.5;
          const auto seed = derive_seed(config.seed, 200 + si, static_cast<std::uint64_t>(li), static_cast<std::uint64_t>(r));
          job.run = [&st, &gait, sensors, seed, x, settings = config.simulation] {
            const double at[] = {x};
            return std::move(footstep_sequence(st.beam, st.attenuation, gait, at, 1, sensors, seed, settings)
                                 .front()
                                 .simulation);
          };
          jobs.push_back(std::move(job));
        }
      }
    }
  }

  Dataset ds;
  ds.manifest.feature_spec = config.features;
  for (const auto& st : config.structures) ds.manifest.structures.push_back({st.id, st.material});
  ds.manifest.sessions.resize(jobs.size());
  ds.traces.resize(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t i) {
    auto sim = jobs[i].run();
    auto session = jobs[i].session;
    for (auto& step : sim.steps) {
      if (!jobs[i].grid_location.empty()) step.location_id = jobs[i].grid_location;
      session.events.push_back(step);
    }
    for (auto& t : sim.traces) {
      session.traces.push_back({sensor_file(session.session_id, t.sensor_id), t.sensor_id, t.sensor_position_m,
                                t.sample_rate_hz});
    }
    ds.manifest.sessions[i] = std::move(session);
    ds.traces[i] = std::move(sim.traces);
  });
  ds.manifest.validate();
  return ds;
}

fs::path write_dataset(const Dataset& dataset, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "traces", ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
  const auto& sessions = dataset.manifest.sessions;
  parallel_for(sessions.size(), [&](std::size_t s) {
    for (std::size_t c = 0; c < sessions[s].traces.size(); ++c) {
      save_trace_csv(dataset.traces[s][c], dir / sessions[s].traces[c].path);
    }
  });
  const auto manifest = dir / "manifest.json";
  save_manifest(dataset.manifest, manifest);
  return manifest;
}

}  // namespace vibestep
