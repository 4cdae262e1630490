#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "bf/error.hpp"
#include "bf/experiment.hpp"
#include "bf/extensions.hpp"
#include "bf/pipeline.hpp"
#include "bf/snapshot.hpp"
#include "fixtures.hpp"
#include "training.hpp"

namespace {

namespace ml = bf::mainloop;
using nlohmann::json;

class Recorder final : public ml::Extension {
 public:
  explicit Recorder(std::vector<std::string>* out)
      : Extension({ml::Trigger::BeforeTraining, ml::Trigger::BeforeEpoch, ml::Trigger::BeforeBatch,
                   ml::Trigger::AfterBatch, ml::Trigger::AfterEpoch, ml::Trigger::AfterTraining,
                   ml::Trigger::OnInterrupt}),
        out_(out) {}
  std::string_view kind() const noexcept override { return "recorder"; }
  void on(ml::Trigger t, ml::MainLoop&) override { out_->emplace_back(ml::trigger_name(t)); }

 private:
  std::vector<std::string>* out_;
};

class Action final : public ml::Extension {
 public:
  Action(std::int64_t at, std::function<void(ml::MainLoop&)> f)
      : Extension({ml::Trigger::AfterBatch}), at_(at), f_(std::move(f)) {}
  std::string_view kind() const noexcept override { return "action"; }
  void on(ml::Trigger, ml::MainLoop& loop) override {
    if (loop.status().iterations_done == at_) f_(loop);
  }

 private:
  std::int64_t at_;
  std::function<void(ml::MainLoop&)> f_;
};

class MainLoopTest : public ::testing::Test {
 protected:
  void SetUp() override { blobs_ = bf::testing::make_builtin_container(dir_.path(), "synth-blobs"); }

  std::unique_ptr<bf::experiment::Experiment> build(json extensions, std::size_t batch = 10,
                                                    json rules = json::array({{{"rule", "adam"}}})) {
    return bf::experiment::Experiment::build(
        bf::testing::blobs_training_spec(blobs_, std::move(extensions), std::move(rules), batch), dir_.path());
  }

  static std::vector<bf::Array> params(bf::experiment::Experiment& ex) {
    std::vector<bf::Array> out;
    for (auto* p : ex.loop().parameters()) out.push_back(p->value);
    return out;
  }

  bf::testing::TempDir dir_;
  std::filesystem::path blobs_;
};

TEST_F(MainLoopTest, FinishAfterIterations) {
  auto ex = build(json::array({{{"kind", "finish_after"}, {"iterations", 23}}}));
  const auto& log = ex->loop().run();
  EXPECT_EQ(ex->loop().status().iterations_done, 23);
  EXPECT_EQ(ex->loop().status().epochs_done, 1);
  EXPECT_TRUE(ex->loop().status().training_finished);
  EXPECT_EQ(log.size(), 23u);
  EXPECT_TRUE(log.find(23, "train_cost").has_value());
}

TEST_F(MainLoopTest, TriggerOrder) {
  auto ex = build(json::array({{{"kind", "finish_after"}, {"epochs", 1}}}), 80);
  std::vector<std::string> seen;
  ex->loop().add_extension(std::make_unique<Recorder>(&seen));
  ex->loop().run();
  EXPECT_EQ(seen, (std::vector<std::string>{"before_training", "before_epoch", "before_batch", "after_batch",
                                            "before_batch", "after_batch", "after_epoch", "after_training"}));
}

TEST_F(MainLoopTest, MonitoringLogsOncePerEpoch) {
  auto ex = build(json::array({{{"kind", "finish_after"}, {"epochs", 3}},
                               {{"kind", "monitoring"}, {"split", "test"}, {"batch_size", 15}}}),
                  40);
  const auto& log = ex->loop().run();
  std::vector<std::int64_t> at;
  for (const auto& [k, row] : log.rows()) {
    if (row.count("valid_cost")) at.push_back(k);
  }
  EXPECT_EQ(at, (std::vector<std::int64_t>{4, 8, 12}));
}

TEST_F(MainLoopTest, MonitoringIsExampleWeighted) {
  auto ex = build(json::array({{{"kind", "finish_after"}, {"iterations", 1}}}));
  ex->loop().run();
  auto make = [&](std::size_t batch) {
    return ml::Monitoring(bf::build_pipeline(ex->pipeline_spec("test", false, batch)), {ex->cost()});
  };
  auto whole = make(40);
  auto uneven = make(15);  // 15 + 15 + 10
  EXPECT_NEAR(whole.evaluate(ex->loop())[0], uneven.evaluate(ex->loop())[0], 1e-12);
}

TEST_F(MainLoopTest, LogToFileWritesOneLinePerIteration) {
  const auto path = dir_ / "log.jsonl";
  auto ex = build(json::array({{{"kind", "finish_after"}, {"iterations", 5}},
                               {{"kind", "log_to_file"}, {"path", path.string()}}}));
  const auto& log = ex->loop().run();
  std::ifstream in(path);
  EXPECT_EQ(ml::TrainingLog::from_jsonl(in), log);
  std::istringstream lines(bf::testing::read_file(path));
  std::string first;
  std::getline(lines, first);
  EXPECT_EQ(first, log.line(1));
}

TEST_F(MainLoopTest, ResumeFromSnapshotIsBitExact) {
  const auto snap = dir_ / "mid.bfck";
  auto reference = build(json::array({{{"kind", "finish_after"}, {"iterations", 30}}}));
  reference->loop().run();

  auto first = build(json::array({{{"kind", "finish_after"}, {"iterations", 30}},
                                  {{"kind", "checkpoint"}, {"path", snap.string()}, {"only_at", {19}}}}));
  first->loop().add_extension(std::make_unique<Action>(19, [](ml::MainLoop& l) { l.request_interrupt(); }));
  first->loop().run();
  EXPECT_EQ(first->loop().status().iterations_done, 19);
  EXPECT_TRUE(first->loop().status().interrupted);

  auto resumed = build(json::array({{{"kind", "finish_after"}, {"iterations", 30}},
                                    {{"kind", "checkpoint"}, {"path", snap.string()}, {"only_at", {19}}}}));
  resumed->loop().add_extension(std::make_unique<Action>(-1, [](ml::MainLoop&) {}));
  resumed->loop().resume_from(snap);
  EXPECT_EQ(resumed->loop().status().iterations_done, 19);
  resumed->loop().run();
  EXPECT_EQ(resumed->loop().status().iterations_done, 30);
  const auto a = params(*reference), b = params(*resumed);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(bf::bitwise_equal(a[i], b[i]));
  EXPECT_EQ(reference->loop().rule_state(), resumed->loop().rule_state());
  EXPECT_EQ(reference->loop().log(), resumed->loop().log());
}

TEST_F(MainLoopTest, RestoreRejectsMismatchedSetups) {
  const auto snap = dir_ / "s.bfck";
  auto ex = build(json::array({{{"kind", "finish_after"}, {"iterations", 3}},
                               {{"kind", "checkpoint"}, {"path", snap.string()}, {"every_n", 3}}}));
  ex->loop().run();
  auto other_rules = build(json::array({{{"kind", "finish_after"}, {"iterations", 3}},
                                        {{"kind", "checkpoint"}, {"path", snap.string()}, {"every_n", 3}}}),
                           10, json::array({{{"rule", "scale"}, {"learning_rate", 0.1}}}));
  EXPECT_THROW(other_rules->loop().resume_from(snap), bf::ContractError);
  auto other_batch = build(json::array({{{"kind", "finish_after"}, {"iterations", 3}},
                                        {{"kind", "checkpoint"}, {"path", snap.string()}, {"every_n", 3}}}),
                           20);
  EXPECT_THROW(other_batch->loop().resume_from(snap), bf::ContractError);
  auto fewer_ext = build(json::array({{{"kind", "finish_after"}, {"iterations", 3}}}));
  EXPECT_THROW(fewer_ext->loop().resume_from(snap), bf::ContractError);
}

TEST_F(MainLoopTest, ExtensionFailureFiresOnInterruptAndRethrows) {
  const auto snap = dir_ / "crash.bfck";
  auto ex = build(json::array({{{"kind", "finish_after"}, {"iterations", 50}},
                               {{"kind", "checkpoint"}, {"path", snap.string()}, {"only_at", {1000}}}}));
  std::vector<std::string> seen;
  ex->loop().add_extension(std::make_unique<Recorder>(&seen));
  ex->loop().add_extension(std::make_unique<Action>(4, [](ml::MainLoop&) { throw std::runtime_error("boom"); }));
  EXPECT_THROW(ex->loop().run(), std::runtime_error);
  EXPECT_EQ(seen.back(), "on_interrupt");
  ASSERT_TRUE(std::filesystem::exists(snap));
  EXPECT_EQ(bf::mainloop::read_snapshot(snap).status.iterations_done, 4);
}

TEST_F(MainLoopTest, ZeroBatchEpochStopsWithWarning) {
  json spec = bf::testing::blobs_training_spec(blobs_, json::array({{{"kind", "finish_after"}, {"epochs", 5}}}),
                                               json::array({{{"rule", "adam"}}}), 500);
  spec["scheme"]["policy"] = "drop";
  auto ex = bf::experiment::Experiment::build(spec, dir_.path());
  const auto& log = ex->loop().run();
  EXPECT_EQ(ex->loop().status().iterations_done, 0);
  EXPECT_FALSE(log.warnings().empty());
}

TEST_F(MainLoopTest, LearningRateScheduleDecaysPerEpoch) {
  auto ex = build(json::array({{{"kind", "finish_after"}, {"epochs", 2}},
                               {{"kind", "learning_rate_schedule"}, {"rule_index", 0}, {"decay", 0.5}}}),
                  80, json::array({{{"rule", "scale"}, {"learning_rate", 0.2}}}));
  const auto& log = ex->loop().run();
  EXPECT_EQ(log.find(2, "learning_rate"), 0.1);
  EXPECT_EQ(log.find(4, "learning_rate"), 0.05);
  EXPECT_EQ(ex->loop().initial_rule_chain()[0].learning_rate, 0.2);
}

TEST_F(MainLoopTest, WeightNormConstraintHolds) {
  json spec = bf::testing::blobs_training_spec(blobs_, json::array({{{"kind", "finish_after"}, {"iterations", 20}}}),
                                               json::array({{{"rule", "scale"}, {"learning_rate", 1.0}}}));
  spec["weight_norm"] = {{"limit", 0.5}, {"roles", {"WEIGHT"}}};
  auto ex = bf::experiment::Experiment::build(spec, dir_.path());
  ex->loop().run();
  for (auto* p : ex->loop().parameters()) {
    if (p->variable.has_role(bf::graph::Role::Weight)) {
      EXPECT_LE(p->value.norm(), 0.5 + 1e-12);
    }
  }
}

TEST(TrainingLog, RecordsAndSerializes) {
  ml::TrainingLog log;
  log.record(1, "cost", 0.5);
  log.record(2, "cost", std::nan(""));
  log.warn(2, "empty");
  EXPECT_THROW(log.record(1, "cost", 1.0), bf::ContractError);
  EXPECT_EQ(log.line(1), R"({"iteration":1,"channels":{"cost":0.5}})");
  EXPECT_EQ(log.line(2), R"({"iteration":2,"channels":{"cost":null},"warnings":["empty"]})");
  std::istringstream in(log.line(1) + "\n" + log.line(2) + "\n");
  EXPECT_EQ(ml::TrainingLog::from_jsonl(in), log);
  EXPECT_EQ(ml::TrainingLog::from_json(log.to_json()), log);
  EXPECT_EQ(log.channel_names(), (std::vector<std::string>{"cost"}));
}

TEST(TrainingStatus, JsonRoundTrip) {
  ml::TrainingStatus s;
  s.iterations_done = 7;
  s.epochs_done = 1;
  s.started = true;
  s.epoch_open = true;
  s.epoch_iterations = 3;
  EXPECT_EQ(ml::TrainingStatus::from_json(s.to_json()), s);
}

}  // namespace
