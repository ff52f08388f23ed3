#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "stepstone/campaign.hpp"
#include "stepstone/dataset.hpp"
#include "stepstone/env.hpp"
#include "stepstone/learning.hpp"
#include "stepstone/mcts.hpp"
#include "stepstone/oracle.hpp"

using namespace stepstone;

namespace {

RobotConfig robot_or_default(const std::string& path) { return path.empty() ? RobotConfig{} : load_robot_config(path); }

int cmd_gen_data(const std::string& gait, std::size_t n, std::uint64_t seed, const std::string& out, std::size_t val_n,
                 const std::string& val_out, const std::string& robot_path) {
  const RobotConfig robot = robot_or_default(robot_path);
  const GaitSpec spec = GaitSpec::of(gait_from_string(gait));
  auto records = collect_dataset(n, spec, robot, seed);
  if (val_n > 0) {
    if (val_n >= records.size()) throw std::invalid_argument("--val-n must be smaller than --n");
    if (val_out.empty()) throw std::invalid_argument("--val-n needs --val-out");
    std::vector<TransitionRecord> val(records.end() - static_cast<std::ptrdiff_t>(val_n), records.end());
    records.resize(records.size() - val_n);
    save_dataset(val, val_out);
  }
  save_dataset(records, out);
  std::size_t pos = 0;
  for (const auto& r : records) pos += static_cast<std::size_t>(r.y);
  std::cerr << "wrote " << records.size() << " records (" << pos << " feasible) to " << out << '\n';
  return 0;
}

int cmd_train(const std::string& dataset, const std::string& val_path, const std::string& network, const std::string& out,
              const std::string& metrics, int epochs, double sigma_aug_sq, std::uint64_t seed) {
  const bool classifier = network == "classifier";
  if (!classifier && network != "predictor_adjuster") throw std::invalid_argument("unknown network '" + network + "'");
  const auto train = load_dataset(dataset, classifier);
  const auto val = val_path.empty() ? std::vector<TransitionRecord>{} : load_dataset(val_path, classifier);
  if (train.empty()) throw DatasetError("dataset " + dataset + " is empty");
  nn::TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.sigma_aug_sq = sigma_aug_sq;
  cfg.seed = seed;
  TrainReport report;
  if (classifier) {
    nn::save_model(train_classifier(train, val, cfg, &report), out);
  } else {
    nn::save_model(train_transition_model(train, val, cfg, &report), out);
  }
  const auto j = to_json(report);
  if (!metrics.empty()) {
    std::ofstream m(metrics);
    if (!m) throw std::runtime_error("cannot write " + metrics);
    m << j.dump(2) << '\n';
  }
  if (classifier) {
    std::cout << "val_roc_auc " << j["val_roc_auc"] << " val_accuracy " << j["val_accuracy"] << '\n';
  } else {
    std::cout << "val_mse " << j["val_mse"] << '\n';
  }
  return 0;
}

int cmd_plan(const std::string& env_file, const std::string& clf_path, const std::string& tm_path, bool no_dyn,
             bool no_adjust, double alpha, double beta, std::uint64_t seed, int max_iterations, const std::string& gait,
             const std::string& robot_path) {
  const Environment env = load_environment(env_file);
  const RobotConfig robot = robot_or_default(robot_path);
  std::optional<nn::FeasibilityClassifier> clf;
  std::optional<nn::TransitionModel> tm;
  if (!clf_path.empty()) clf = nn::load_classifier(clf_path);
  if (!tm_path.empty()) tm = nn::load_transition_model(tm_path);
  SearchConfig sc;
  sc.dynamic_pruning = !no_dyn;
  sc.target_adjustment = !no_adjust;
  sc.weights = {alpha, beta};
  sc.seed = seed;
  sc.max_iterations = max_iterations;
  sc.gait = GaitSpec::of(gait_from_string(gait));
  const PlanResult r = plan(env, robot, {clf ? &*clf : nullptr, tm ? &*tm : nullptr}, sc);
  std::cout << to_json(r).dump() << '\n';
  return r.success ? 0 : 3;
}

int cmd_campaign(const std::string& config_path, const std::string& out) {
  std::ifstream in(config_path);
  if (!in) throw CampaignConfigError("cannot read " + config_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw CampaignConfigError(std::string("campaign config is not valid JSON: ") + e.what());
  }
  const CampaignConfig config = campaign_config_from_json(j);
  std::optional<nn::FeasibilityClassifier> clf;
  std::optional<nn::TransitionModel> tm;
  if (!config.classifier_path.empty()) clf = nn::load_classifier(config.classifier_path);
  if (!config.transition_path.empty()) tm = nn::load_transition_model(config.transition_path);
  const CampaignReport report = run_campaign(config, {clf ? &*clf : nullptr, tm ? &*tm : nullptr});
  const std::string csv = campaign_csv(report);
  {
    std::ofstream f(out + ".csv");
    if (!f) throw std::runtime_error("cannot write " + out + ".csv");
    f << csv;
  }
  {
    std::ofstream f(out + ".json");
    if (!f) throw std::runtime_error("cannot write " + out + ".json");
    f << to_json(report).dump(1) << '\n';
  }
  std::cout << csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stepping-stone contact planning with learned feasibility and target adjustment"};
  app.require_subcommand(1);

  std::string gait = "jump", out, val_out, robot_path;
  std::size_t n = 0, val_n = 0;
  std::uint64_t seed = 0;
  auto* gen = app.add_subcommand("gen-data", "collect labelled transitions with the surrogate controller");
  gen->add_option("--gait", gait)->check(CLI::IsMember({"trot", "jump"}));
  gen->add_option("--n", n, "number of records")->required();
  gen->add_option("--seed", seed);
  gen->add_option("--out", out)->required();
  gen->add_option("--val-n", val_n, "records split off as a validation set");
  gen->add_option("--val-out", val_out);
  gen->add_option("--robot", robot_path, "robot config JSON");

  std::string dataset, val_path, network, metrics;
  int epochs = 40;
  double sigma_aug_sq = 1e-4;
  auto* train = app.add_subcommand("train", "train the classifier or the predictor/adjuster");
  train->add_option("--dataset", dataset)->required();
  train->add_option("--val", val_path);
  train->add_option("--network", network)->required()->check(CLI::IsMember({"classifier", "predictor_adjuster"}));
  train->add_option("--out", out)->required();
  train->add_option("--metrics", metrics);
  train->add_option("--epochs", epochs);
  train->add_option("--sigma-aug-sq", sigma_aug_sq);
  train->add_option("--seed", seed);

  std::string env_file, clf_path, tm_path;
  bool no_dyn = false, no_adjust = false;
  double alpha = 0.0, beta = 0.0;
  int max_iterations = 10000;
  auto* planc = app.add_subcommand("plan", "plan one environment and print the result as JSON");
  planc->add_option("--env-file", env_file)->required();
  planc->add_option("--classifier", clf_path);
  planc->add_option("--transition", tm_path);
  planc->add_flag("--no-dyn", no_dyn);
  planc->add_flag("--no-adjust", no_adjust);
  planc->add_option("--alpha", alpha);
  planc->add_option("--beta", beta);
  planc->add_option("--seed", seed);
  planc->add_option("--max-iterations", max_iterations);
  planc->add_option("--gait", gait)->check(CLI::IsMember({"trot", "jump"}));
  planc->add_option("--robot", robot_path);

  std::string config_path;
  auto* camp = app.add_subcommand("campaign", "run a randomized benchmark campaign");
  camp->add_option("--config", config_path)->required();
  camp->add_option("--out", out, "output prefix; writes <out>.csv and <out>.json")->required();

  double side = 0.08;
  auto* genv = app.add_subcommand("gen-env", "write a random stepping-stone environment");
  genv->add_option("--seed", seed);
  genv->add_option("--side", side);
  genv->add_option("--out", out)->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_gen_data(gait, n, seed, out, val_n, val_out, robot_path);
    if (*train) return cmd_train(dataset, val_path, network, out, metrics, epochs, sigma_aug_sq, seed);
    if (*planc) {
      return cmd_plan(env_file, clf_path, tm_path, no_dyn, no_adjust, alpha, beta, seed, max_iterations, gait, robot_path);
    }
    if (*camp) return cmd_campaign(config_path, out);
    if (*genv) {
      EnvConfig ec;
      ec.side = side;
      save_environment(generate_environment(seed, ec), out);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
