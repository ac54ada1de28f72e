#include "vibestep/online.hpp"

#include "vibestep/matching.hpp"

#include <numeric>
#include <set>

namespace vibestep {

MatchedAccuracy matched_accuracy(std::span<const int> clusters, std::span<const std::string> persons) {
  if (clusters.size() != persons.size()) throw DataError("cluster and person lists differ in length");
  std::map<int, int> cluster_index;
  std::map<std::string, int> person_index;
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    cluster_index.emplace(clusters[i], static_cast<int>(cluster_index.size()));
    person_index.emplace(persons[i], static_cast<int>(person_index.size()));
  }
  // emplace keeps first-seen numbering; renumber in key order for stability
  int k = 0;
  for (auto& [id, idx] : cluster_index) idx = k++;
  k = 0;
  for (auto& [id, idx] : person_index) idx = k++;

  MatrixXd counts = MatrixXd::Zero(static_cast<Eigen::Index>(cluster_index.size()),
                                   static_cast<Eigen::Index>(person_index.size()));
  for (std::size_t i = 0; i < clusters.size(); ++i) counts(cluster_index[clusters[i]], person_index[persons[i]]) += 1.0;

  const auto match = max_weight_matching(counts);
  std::vector<std::string> person_names(person_index.size());
  for (const auto& [name, idx] : person_index) person_names[static_cast<std::size_t>(idx)] = name;

  MatchedAccuracy out;
  for (const auto& [id, idx] : cluster_index) {
    const int col = match[static_cast<std::size_t>(idx)];
    if (col < 0 || counts(idx, col) == 0.0) continue;
    out.cluster_to_person[id] = person_names[static_cast<std::size_t>(col)];
    out.correct += static_cast<std::size_t>(counts(idx, col));
  }
  out.accuracy = clusters.empty() ? 1.0 : static_cast<double>(out.correct) / static_cast<double>(clusters.size());
  return out;
}

int majority_vote(const std::map<int, int>& votes) {
  int winner = kNewCluster, best = 0;
  for (const auto& [id, n] : votes) {
    if (id != kNewCluster && n > best) {
      best = n;
      winner = id;
    }
  }
  const auto fresh = votes.find(kNewCluster);
  if (fresh != votes.end() && fresh->second > best) winner = kNewCluster;
  return winner;
}

void seed_model(DpmmModel<double>& model, std::span<const VectorXd> seed) {
  int cluster = kNewCluster;
  for (const auto& x : seed) cluster = model.assign(x, cluster);
}

OnlineRunReport identify_stream(DpmmModel<double>& model, std::span<const StreamSample> stream,
                                std::span<const std::string> seed_persons) {
  OnlineRunReport report;
  report.seed_samples = static_cast<std::size_t>(model.total_count());
  std::set<std::string> seen(seed_persons.begin(), seed_persons.end());
  std::vector<std::string> truth;
  truth.reserve(stream.size());

  auto record = [&](std::size_t i, int assigned, bool created) {
    if (created) {
      report.newcomers.push_back({i, assigned, stream[i].person_id, !seen.count(stream[i].person_id)});
    }
    seen.insert(stream[i].person_id);
    report.assignments.push_back(assigned);
    truth.push_back(stream[i].person_id);
  };

  if (model.config().mode == AssignmentMode::PerFootstep) {
    for (std::size_t i = 0; i < stream.size(); ++i) {
      const auto dec = model.predict(stream[i].x);
      const int id = model.update(stream[i].x, dec);
      record(i, id, dec.is_newcomer);
    }
  } else {
    std::size_t i = 0;
    while (i < stream.size()) {
      std::size_t end = i + 1;
      while (end < stream.size() && stream[end].session_id == stream[i].session_id) ++end;
      std::map<int, int> votes;
      for (std::size_t j = i; j < end; ++j) votes[model.predict(stream[j].x).assigned] += 1;
      const int winner = majority_vote(votes);
      int target = winner;
      for (std::size_t j = i; j < end; ++j) {
        const int id = model.assign(stream[j].x, target);
        record(j, id, j == i && winner == kNewCluster);
        target = id;
      }
      i = end;
    }
  }

  const auto acc = matched_accuracy(report.assignments, truth);
  report.accuracy = acc.accuracy;
  report.correct_samples = acc.correct;
  report.cluster_to_person = acc.cluster_to_person;
  report.total_samples = stream.size();
  report.cluster_count = model.clusters().size();
  report.person_count = std::set<std::string>(truth.begin(), truth.end()).size();
  return report;
}

void AdaptiveOptions::validate() const {
  if (confirm_count < 1) throw ConfigError("confirm_count must be at least 1");
  if (gamma && *gamma < 0.0) throw ConfigError("ridge must be non-negative");
  if (!(alpha > 0.0)) throw ConfigError("DP concentration alpha must be positive");
}

namespace {

class AdaptiveState {
 public:
  AdaptiveState(std::span<const VectorXd> seed, const AdaptiveOptions& options)
      : options_(options), seed_(seed.begin(), seed.end()), model_(make_config(identity())) {
    if (seed_.empty()) throw DataError("online identification needs seed data");
    for (const auto& x : seed_) {
      if (x.size() != seed_.front().size()) throw DataError("seed samples disagree on dimension");
    }
    transform_ = identity();
    confirmed_.insert(0);
    raw_.assign(seed_.begin(), seed_.end());
    clusters_.assign(seed_.size(), 0);
    refit();
  }

  const FisherTransform<double>& transform() const { return transform_; }
  DpmmModel<double>& model() { return model_; }

  VectorXd map(const VectorXd& x) const { return transform_.apply(x); }

  int assign(const VectorXd& raw, int cluster) {
    const int id = model_.assign(map(raw), cluster);
    raw_.push_back(raw);
    clusters_.push_back(id);
    return id;
  }

  // Refits after newly confirmed clusters; returns whether anything changed.
  bool confirm_new_clusters() {
    if (!options_.use_transform || options_.refit == RefitPolicy::Never) return false;
    bool added = false;
    for (const auto& c : model_.clusters()) {
      if (c.count >= options_.confirm_count && confirmed_.insert(c.id).second) added = true;
    }
    if (added) refit();
    return added;
  }

 private:
  FisherTransform<double> identity() const {
    FisherTransform<double> t;
    const auto d = seed_.empty() ? Eigen::Index{1} : seed_.front().size();
    t.w = MatrixXd::Identity(d, d);
    t.eigenvalues = VectorXd::Zero(d);
    t.class_count = 1;
    t.degenerate = true;
    return t;
  }

  DpmmConfig<double> make_config(const FisherTransform<double>& t) const {
    MatrixXd rows(static_cast<Eigen::Index>(seed_.size()), t.output_dimension());
    for (std::size_t i = 0; i < seed_.size(); ++i) rows.row(static_cast<Eigen::Index>(i)) = t.apply(seed_[i]).transpose();
    DpmmConfig<double> config;
    config.alpha = options_.alpha;
    config.mode = options_.mode;
    config.prior = NiwPrior<double>::from_seed(rows, t.output_dimension(), options_.prior_spread);
    return config;
  }

  void refit() {
    if (options_.use_transform) {
      std::vector<MatrixXd> groups;
      for (int id : confirmed_) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < clusters_.size(); ++i) {
          if (clusters_[i] == id) rows.push_back(i);
        }
        MatrixXd g(static_cast<Eigen::Index>(rows.size()), seed_.front().size());
        for (std::size_t r = 0; r < rows.size(); ++r) g.row(static_cast<Eigen::Index>(r)) = raw_[rows[r]].transpose();
        groups.push_back(std::move(g));
      }
      const auto s = scatter_matrices<double>(groups);
      // all d directions: with few confirmed persons the C - 1 discriminant
      // directions cannot represent persons not seen yet
      transform_ = fit_scatter<double>(s, s.dimension(), options_.gamma);
    }
    std::vector<AssignmentRecord<double>> log;
    log.reserve(raw_.size());
    for (std::size_t i = 0; i < raw_.size(); ++i) log.push_back({map(raw_[i]), clusters_[i]});
    model_ = DpmmModel<double>::replay(make_config(transform_), log);
  }

  AdaptiveOptions options_;
  std::vector<VectorXd> seed_;
  FisherTransform<double> transform_;
  DpmmModel<double> model_;
  std::set<int> confirmed_;
  std::vector<VectorXd> raw_;
  std::vector<int> clusters_;
};

}  // namespace

AdaptiveRun identify_adaptive(std::span<const VectorXd> seed, std::span<const StreamSample> stream,
                              const AdaptiveOptions& options, std::span<const std::string> seed_persons) {
  options.validate();
  AdaptiveState state(seed, options);
  AdaptiveRun run{{}, {}, {}, state.model()};
  auto& report = run.report;
  report.seed_samples = seed.size();
  std::set<std::string> seen(seed_persons.begin(), seed_persons.end());
  std::vector<std::string> truth;
  truth.reserve(stream.size());

  std::size_t i = 0;
  while (i < stream.size()) {
    std::size_t end = i + 1;
    if (options.mode == AssignmentMode::PerTraceMajority) {
      while (end < stream.size() && stream[end].session_id == stream[i].session_id) ++end;
    }
    std::map<int, int> votes;
    for (std::size_t j = i; j < end; ++j) votes[state.model().predict(state.map(stream[j].x)).assigned] += 1;
    const int winner = majority_vote(votes);
    int target = winner;
    for (std::size_t j = i; j < end; ++j) {
      target = state.assign(stream[j].x, target);
      if (j == i && winner == kNewCluster) {
        report.newcomers.push_back({j, target, stream[j].person_id, !seen.count(stream[j].person_id)});
      }
      seen.insert(stream[j].person_id);
      report.assignments.push_back(target);
      truth.push_back(stream[j].person_id);
    }
    if (state.confirm_new_clusters()) run.refits.push_back({end - 1, state.transform().class_count});
    i = end;
  }

  const auto acc = matched_accuracy(report.assignments, truth);
  report.accuracy = acc.accuracy;
  report.correct_samples = acc.correct;
  report.cluster_to_person = acc.cluster_to_person;
  report.total_samples = stream.size();
  report.cluster_count = state.model().clusters().size();
  report.person_count = std::set<std::string>(truth.begin(), truth.end()).size();
  run.transform = state.transform();
  run.model = state.model();
  return run;
}

}  // namespace vibestep
