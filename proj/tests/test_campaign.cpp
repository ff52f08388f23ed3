#include <gtest/gtest.h>

#include "stepstone/campaign.hpp"

using namespace stepstone;

namespace {

CampaignConfig small_config() {
  CampaignConfig c;
  c.sizes = {0.08};
  c.n_envs = 3;
  c.ablations = {Ablation::parse("kin")};
  c.search.max_iterations = 200;
  c.seed = 4;
  c.timing = false;
  return c;
}

}  // namespace

TEST(Campaign, AblationNames) {
  for (const std::string s : {"kin", "kin+adj", "dyn", "dyn+adj"}) EXPECT_EQ(Ablation::parse(s).name(), s);
  EXPECT_FALSE(Ablation::parse("kin").dynamic_pruning);
  EXPECT_TRUE(Ablation::parse("dyn+adj").target_adjustment);
  EXPECT_THROW(Ablation::parse("dynamic"), CampaignConfigError);
  EXPECT_THROW(Ablation::parse("kin+"), CampaignConfigError);
}

TEST(Campaign, ConfigFromJson) {
  const auto c = campaign_config_from_json(nlohmann::json::parse(
      R"({"sizes":[0.07],"n_envs":2,"gait":"trot","ablations":["kin","dyn+adj"],"weights":[[0,0],[0.2,0.4]],
          "seed":9,"max_iterations":50,"timing":false})"));
  EXPECT_EQ(c.sizes, std::vector<double>{0.07});
  EXPECT_EQ(c.gait, Gait::trot);
  ASSERT_EQ(c.weights.size(), 2u);
  EXPECT_DOUBLE_EQ(c.weights[1].beta, 0.4);
  EXPECT_EQ(c.search.max_iterations, 50);
  EXPECT_FALSE(c.timing);
  EXPECT_EQ(campaign_config_from_json(nlohmann::json{{"weights", "grid"}}).weights.size(), 16u);
  EXPECT_THROW(campaign_config_from_json(nlohmann::json{{"n_envs", 0}}), CampaignConfigError);
  EXPECT_THROW(campaign_config_from_json(nlohmann::json{{"weights", {{-1, 0}}}}), CampaignConfigError);
  EXPECT_THROW(campaign_config_from_json(nlohmann::json{{"sizes", "big"}}), CampaignConfigError);
}

TEST(Campaign, SingleCellReport) {
  auto c = small_config();
  c.n_envs = 1;
  const auto r = run_campaign(c, {});
  ASSERT_EQ(r.cells.size(), 1u);
  EXPECT_EQ(r.cells[0].n_runs, 1);
  const std::string csv = campaign_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "size,ablation,alpha,beta,success_rate,oracle_calls,time_s,iterations,contact_error_cm,rollout_time_s,n_runs,"
            "n_errors");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
}

TEST(Campaign, RowsPerWeightSetting) {
  auto c = small_config();
  c.sizes = {0.07, 0.09};
  c.n_envs = 1;
  c.weights = {{0.0, 0.0}, {0.2, 0.4}};
  c.ablations = {Ablation::parse("kin+adj")};
  const auto tm = nn::TransitionModel::zero(4);
  const auto clf = nn::FeasibilityClassifier::accept_all(4);
  const auto r = run_campaign(c, {&clf, &tm});
  ASSERT_EQ(r.cells.size(), 4u);
  EXPECT_DOUBLE_EQ(r.cells[1].weights.alpha, 0.2);
  EXPECT_DOUBLE_EQ(r.cells[2].size, 0.09);
}

TEST(Campaign, ReportsAreReproducible) {
  const auto c = small_config();
  const std::string a = campaign_csv(run_campaign(c, {}));
  const std::string b = campaign_csv(run_campaign(c, {}));
  EXPECT_EQ(a, b);
  EXPECT_NE(a.find(",NA,"), std::string::npos);
  auto threaded = c;
  threaded.threads = 3;
  EXPECT_EQ(campaign_csv(run_campaign(threaded, {})), a);
}

TEST(Campaign, AblationsShareEnvironmentsAndSeeds) {
  auto c = small_config();
  c.ablations = {Ablation::parse("kin"), Ablation::parse("kin+adj")};
  const auto tm = nn::TransitionModel::zero(4);
  const auto r = run_campaign(c, {nullptr, &tm});
  ASSERT_EQ(r.cells.size(), 2u);
  for (int e = 0; e < c.n_envs; ++e) {
    const auto& a = r.cells[0].runs[static_cast<std::size_t>(e)];
    const auto& b = r.cells[1].runs[static_cast<std::size_t>(e)];
    EXPECT_EQ(a.env_seed, b.env_seed);
    // A zero adjuster changes nothing, so paired runs coincide.
    EXPECT_EQ(a.result.plan, b.result.plan);
    EXPECT_EQ(a.result.oracle_calls, b.result.oracle_calls);
  }
}

TEST(Campaign, MissingModelIsRecordedPerRun) {
  auto c = small_config();
  c.ablations = {Ablation::parse("dyn")};
  const auto r = run_campaign(c, {});
  EXPECT_EQ(r.cells[0].n_errors, c.n_envs);
  EXPECT_EQ(to_json(r)["cells"][0]["runs"][0]["ok"], false);
}
