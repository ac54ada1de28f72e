#ifndef VIBESTEP_ONLINE_HPP
#define VIBESTEP_ONLINE_HPP

#include "vibestep/dpmm.hpp"
#include "vibestep/fisher.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vibestep {

// One observation of the identification stream. person_id is ground truth
// and is never shown to the model; session_id groups footsteps of one walk.
struct StreamSample {
  VectorXd x;
  std::string person_id;
  std::string session_id;
};

struct NewcomerEvent {
  std::size_t sample_index = 0;
  int cluster_id = 0;
  std::string true_person;
  bool person_was_unseen = false;  // true person had not been streamed or seeded before
};

struct OnlineRunReport {
  double accuracy = 0.0;
  std::size_t total_samples = 0;
  std::size_t correct_samples = 0;
  std::size_t seed_samples = 0;
  std::size_t cluster_count = 0;
  std::size_t person_count = 0;
  std::map<int, std::string> cluster_to_person;  // matched clusters only
  std::vector<NewcomerEvent> newcomers;
  std::vector<int> assignments;  // cluster id per streamed sample
};

// Fraction of samples whose cluster maps to their person under the
// maximum-weight one-to-one matching of clusters to persons. Samples in
// unmatched clusters count as errors.
struct MatchedAccuracy {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::map<int, std::string> cluster_to_person;
};
MatchedAccuracy matched_accuracy(std::span<const int> clusters, std::span<const std::string> persons);

// Assigns seed samples to one cluster (the known person) before streaming.
void seed_model(DpmmModel<double>& model, std::span<const VectorXd> seed);

// Walk-level decision from per-footstep votes: the largest count wins, ties go
// to the lowest existing cluster id, and NEW wins only with a strict majority
// over every existing cluster.
int majority_vote(const std::map<int, int>& votes);

// Sequential predict -> update over the stream, in order. In
// PerTraceMajority mode all footsteps of a walk are predicted on the same
// model state and then assigned together to the majority decision.
OnlineRunReport identify_stream(DpmmModel<double>& model, std::span<const StreamSample> stream,
                                std::span<const std::string> seed_persons = {});

// Online identification that also learns the feature transform. The model
// starts from the seed person alone, with a transform that whitens that
// person's within scatter. Whenever a newly created cluster reaches
// confirm_count samples it is treated as a confirmed person, the transform is
// refit on all confirmed clusters, and the model is rebuilt by replaying the
// assignment log in the new feature space.
enum class RefitPolicy { OnConfirmedNewcomer, Never };

struct AdaptiveOptions {
  bool use_transform = true;
  RefitPolicy refit = RefitPolicy::OnConfirmedNewcomer;
  int confirm_count = 40;
  std::optional<double> gamma;  // ridge; default 1e-6 tr(S_W) / d
  double alpha = 1e-4;
  AssignmentMode mode = AssignmentMode::PerTraceMajority;
  PriorSpread prior_spread = PriorSpread::PerCoordinate;

  void validate() const;
};

struct TransformRefit {
  std::size_t sample_index = 0;  // stream position after which the refit happened
  int class_count = 0;
};

struct AdaptiveRun {
  OnlineRunReport report;
  FisherTransform<double> transform;  // final transform (identity when disabled)
  std::vector<TransformRefit> refits;
  DpmmModel<double> model;            // final model in the final feature space
};

AdaptiveRun identify_adaptive(std::span<const VectorXd> seed, std::span<const StreamSample> stream,
                              const AdaptiveOptions& options, std::span<const std::string> seed_persons = {});

}  // namespace vibestep

#endif  // VIBESTEP_ONLINE_HPP
