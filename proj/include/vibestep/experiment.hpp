#ifndef VIBESTEP_EXPERIMENT_HPP
#define VIBESTEP_EXPERIMENT_HPP

#include "vibestep/beam_sim.hpp"
#include "vibestep/data_model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vibestep {

struct StructureConfig {
  std::string id;
  std::string material;
  BeamModel beam;
  AttenuationModel attenuation;
};

// Wood-framed platform and concrete corridor parameter sets.
StructureConfig wood_structure();
StructureConfig concrete_structure();

// Desk-scale synthetic counterpart of a two-structure walking experiment:
// every person walks repeatedly over each structure past four sensors 2 m
// apart, and each structure also gets ball drops and in-place footsteps on a
// grid of excitation locations.
struct ExperimentConfig {
  std::vector<StructureConfig> structures;
  int persons = 10;
  int walks = 10;
  std::vector<double> sensor_positions_m{0.5, 2.5, 4.5, 6.5};
  SimulationSettings simulation;
  int grid_locations = 9;
  int grid_repeats = 5;
  std::uint64_t seed = 2023;
  FeatureSpec features;

  static ExperimentConfig defaults();
  void validate() const;
};

// Person-specific gaits drawn deterministically from seed. Heel-strike
// durations are stratified over 30-90 ms so that persons stay distinct.
std::vector<PersonGaitModel> make_population(int persons, std::uint64_t seed);

std::string person_id(int index);

// Simulates the whole experiment in memory. Trace paths in the manifest are
// relative ("traces/<session>_<sensor>.csv") and match write_dataset.
Dataset simulate_experiment(const ExperimentConfig& config);

// Writes traces and manifest.json under dir; returns the manifest path.
std::filesystem::path write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

// Worker count for dataset-level parallel loops: VIBESTEP_THREADS when set,
// otherwise the hardware concurrency.
unsigned worker_threads();

}  // namespace vibestep

#endif  // VIBESTEP_EXPERIMENT_HPP
