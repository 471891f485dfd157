#include "morphgrasp/checkpoint.hpp"
#include "morphgrasp/errors.hpp"
#include "morphgrasp/trainer.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

using namespace morphgrasp;
namespace fs = std::filesystem;
namespace mt = morphgrasp::testing;
using nlohmann::ordered_json;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("morphgrasp_test_training_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunConfig tiny_config() {
  RunConfig c;
  c.seed = 3;
  c.model.denoiser.dim = 16;
  c.model.denoiser.blocks = 1;
  c.model.morph.layers = 1;
  c.model.morph.heads = 2;
  c.model.points.groups = 8;
  c.model.points.neighbors = 8;
  c.model.cloud_points = 64;
  c.diffusion.timesteps = 20;
  c.physics.hand_points = 32;
  c.train.lr = 1e-3;
  c.train.lr_final = 1e-5;
  c.train.batch_size = 4;
  c.train.steps = 6;
  c.train.checkpoint_every = 3;
  c.train.log_every = 1;
  c.toy.urdf = (mt::data_dir() / "hands/gripper2f.urdf").string();
  c.toy.mapping = (mt::data_dir() / "hands/gripper2f.mapping.json").string();
  c.toy.grasps = 8;
  c.toy.spheres = 2;
  c.toy.boxes = 2;
  c.validate();
  return c;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void expect_same_params(const GraspModel& a, const GraspModel& b) {
  const auto& ia = a.params().items();
  const auto& ib = b.params().items();
  ASSERT_EQ(ia.size(), ib.size());
  for (std::size_t k = 0; k < ia.size(); ++k) {
    EXPECT_EQ(ia[k].first, ib[k].first);
    EXPECT_EQ(ia[k].second.value(), ib[k].second.value()) << ia[k].first;
  }
}

}  // namespace

TEST(Checkpoint, RoundTripRestoresFloat32Parameters) {
  const fs::path dir = scratch_dir("ckpt");
  const RunConfig cfg = tiny_config();
  const GraspModel a(cfg.model, 1);
  GraspModel b(cfg.model, 2);
  save_checkpoint(dir / "m.mgck", a, cfg);
  load_checkpoint(dir / "m.mgck", b, cfg);
  for (std::size_t k = 0; k < a.params().items().size(); ++k) {
    const ad::Matrix expected = a.params().items()[k].second.value().cast<float>().cast<double>();
    EXPECT_EQ(b.params().items()[k].second.value(), expected);
  }
  const ordered_json header = read_checkpoint_header(dir / "m.mgck");
  EXPECT_EQ(header.at("format"), "morphgrasp-checkpoint");
  EXPECT_TRUE(header.contains("config_hash"));
}

TEST(Checkpoint, MismatchesRejectedBeforeTouchingTheModel) {
  const fs::path dir = scratch_dir("ckpt_bad");
  const RunConfig cfg = tiny_config();
  const GraspModel a(cfg.model, 1);
  save_checkpoint(dir / "m.mgck", a, cfg);

  RunConfig wider = tiny_config();
  wider.model.denoiser.dim = 32;
  wider.validate();
  GraspModel w(wider.model, 1);
  const ad::Matrix before = w.params().items().front().second.value();
  EXPECT_THROW(load_checkpoint(dir / "m.mgck", w, wider), CheckpointError);
  EXPECT_EQ(w.params().items().front().second.value(), before);

  RunConfig longer = tiny_config();
  longer.diffusion.timesteps = 40;
  longer.validate();
  GraspModel l(longer.model, 1);
  EXPECT_THROW(load_checkpoint(dir / "m.mgck", l, longer), CheckpointError);

  {
    std::ofstream out(dir / "junk.mgck", std::ios::binary);
    out << "JUNKJUNKJUNK";
  }
  GraspModel c(cfg.model, 1);
  EXPECT_THROW(load_checkpoint(dir / "junk.mgck", c, cfg), CheckpointError);
  EXPECT_THROW(load_checkpoint(dir / "absent.mgck", c, cfg), Error);
}

TEST(Trainer, EvaluateIsDeterministicAndRowOrderInvariant) {
  const RunConfig cfg = tiny_config();
  const GraspDataset data = generate_toy_dataset(cfg.toy, 1);
  const TrainingSet set = build_training_set(data, cfg);
  GraspModel model(cfg.model, cfg.seed);
  Trainer trainer(cfg, model, set);
  std::mt19937_64 rng(9);
  TrainBatch batch = trainer.draw_batch(rng);
  ASSERT_EQ(batch.rows.size(), 4u);
  std::vector<double> rows;
  const LossReport a = trainer.evaluate(batch, &rows);
  EXPECT_EQ(trainer.evaluate(batch).total, a.total);
  EXPECT_NEAR(std::accumulate(rows.begin(), rows.end(), 0.0) / 4.0, a.total, 1e-12);

  const std::vector<int> perm{2, 0, 3, 1};
  TrainBatch shuffled = batch;
  for (std::size_t k = 0; k < 4; ++k) {
    shuffled.rows[k] = batch.rows[static_cast<std::size_t>(perm[k])];
    shuffled.t[k] = batch.t[static_cast<std::size_t>(perm[k])];
    shuffled.eps.row(static_cast<Eigen::Index>(k)) = batch.eps.row(perm[k]);
  }
  std::vector<double> shuffled_rows;
  const LossReport b = trainer.evaluate(shuffled, &shuffled_rows);
  EXPECT_NEAR(b.total, a.total, 1e-12);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(shuffled_rows[k], rows[static_cast<std::size_t>(perm[k])], 1e-12);
}

TEST(Trainer, ReportBookkeeping) {
  RunConfig cfg = tiny_config();
  cfg.alpha = LossWeights{0.5, 2.0, 0.25};
  const GraspDataset data = generate_toy_dataset(cfg.toy, 2);
  const TrainingSet set = build_training_set(data, cfg);
  GraspModel model(cfg.model, cfg.seed);
  Trainer trainer(cfg, model, set);
  for (int k = 0; k < 3; ++k) {
    const LossReport r = trainer.step();
    EXPECT_NEAR(r.total, r.recon + r.morph + 0.5 * r.spf + 2.0 * r.erf + 0.25 * r.srf, 1e-9);
    EXPECT_GE(r.spf, 0.0);
    EXPECT_GE(r.erf, 0.0);
    EXPECT_GE(r.srf, 0.0);
  }
  EXPECT_EQ(trainer.optimizer().steps(), 3);
}

TEST(Trainer, StepsUpdateParameters) {
  const RunConfig cfg = tiny_config();
  const GraspDataset data = generate_toy_dataset(cfg.toy, 3);
  const TrainingSet set = build_training_set(data, cfg);
  GraspModel model(cfg.model, cfg.seed);
  const ad::Matrix before = model.params().items().back().second.value();
  Trainer trainer(cfg, model, set);
  trainer.step();
  EXPECT_NE(model.params().items().back().second.value(), before);
}

TEST(Trainer, ResumeFromSavedStateIsBitwise) {
  const fs::path dir = scratch_dir("resume_trainer");
  const RunConfig cfg = tiny_config();
  const GraspDataset data = generate_toy_dataset(cfg.toy, 4);
  const TrainingSet set = build_training_set(data, cfg);

  GraspModel straight(cfg.model, cfg.seed);
  Trainer t1(cfg, straight, set);
  std::vector<double> straight_totals;
  for (int k = 0; k < 6; ++k) straight_totals.push_back(t1.step().total);

  GraspModel first(cfg.model, cfg.seed);
  Trainer t2(cfg, first, set);
  for (int k = 0; k < 3; ++k) t2.step();
  save_train_state(dir / "state.bin", first, t2.optimizer(), t2.rng());

  GraspModel resumed(cfg.model, 999);
  Trainer t3(cfg, resumed, set);
  load_train_state(dir / "state.bin", resumed, t3.optimizer(), t3.rng());
  EXPECT_EQ(t3.optimizer().steps(), 3);
  for (int k = 3; k < 6; ++k) EXPECT_EQ(t3.step().total, straight_totals[static_cast<std::size_t>(k)]);
  expect_same_params(resumed, straight);
}

TEST(RunTraining, WritesArtifactsAndResumesExactly) {
  RunConfig cfg = tiny_config();
  cfg.train.lr_final = -1.0;
  const GraspDataset data = generate_toy_dataset(cfg.toy, 5);
  const fs::path full = scratch_dir("run_full"), split = scratch_dir("run_split");

  const LossReport a = run_training(cfg, data, {full, false, nullptr});
  for (const char* f : {"config.json", "metrics.jsonl", "checkpoint.mgck", "train_state.bin"})
    EXPECT_TRUE(fs::exists(full / f)) << f;

  RunConfig half = cfg;
  half.train.steps = 3;
  run_training(half, data, {split, false, nullptr});
  std::ostringstream log;
  const LossReport b = run_training(cfg, data, {split, true, &log});
  EXPECT_EQ(a.total, b.total);
  EXPECT_EQ(file_bytes(full / "train_state.bin"), file_bytes(split / "train_state.bin"));
  EXPECT_EQ(file_bytes(full / "checkpoint.mgck"), file_bytes(split / "checkpoint.mgck"));
  EXPECT_FALSE(log.str().empty());

  // Config echo reproduces the run config.
  std::ifstream in(full / "config.json");
  ordered_json echoed = ordered_json::parse(in);
  EXPECT_TRUE(echoed.contains("tool_version"));
  echoed.erase("tool_version");
  EXPECT_EQ(RunConfig::from_json(echoed).to_json(), cfg.to_json());

  // One metrics line per step, each consistent with the weighted sum.
  std::ifstream metrics(full / "metrics.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(metrics, line)) {
    const auto rec = ordered_json::parse(line);
    ++lines;
    EXPECT_EQ(rec["step"].get<int>(), lines);
    const double sum = rec["recon"].get<double>() + rec["morph"].get<double>() + cfg.alpha.spf * rec["spf"].get<double>() +
                       cfg.alpha.erf * rec["erf"].get<double>() + cfg.alpha.srf * rec["srf"].get<double>();
    EXPECT_NEAR(rec["total"].get<double>(), sum, 1e-9);
  }
  EXPECT_EQ(lines, 6);

  EXPECT_THROW(run_training(cfg, data, {scratch_dir("run_none"), true, nullptr}), StateError);
}

TEST(Sampling, SampleGraspsDeterministicAndNearestDistance) {
  const RunConfig cfg = tiny_config();
  const GraspDataset data = generate_toy_dataset(cfg.toy, 6);
  const GraspModel model(cfg.model, cfg.seed);
  const auto& e = data.embodiments.front();
  const Embodiment hand = make_embodiment(e.tree, e.mapping, 32, 1);
  const auto a = sample_grasps(model, cfg, hand, data.objects[0].model, 3, 17);
  const auto b = sample_grasps(model, cfg, hand, data.objects[0].model, 3, 17);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(a[k], b[k]);
  EXPECT_EQ(mean_nearest_distance(a, a), 0.0);

  CanonicalPose p, q;
  q.t = Vec3(0.3, 0.4, 0.0);
  EXPECT_DOUBLE_EQ(mean_nearest_distance({q}, {p}), 0.5);
  EXPECT_DOUBLE_EQ(mean_nearest_distance({p, q}, {p}), 0.25);
  EXPECT_THROW(mean_nearest_distance({}, {p}), DomainError);
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
  const RunConfig cfg = tiny_config();
  EXPECT_EQ(RunConfig::from_json(cfg.to_json()).to_json(), cfg.to_json());
  ordered_json bad = cfg.to_json();
  bad["train"]["learning_rate"] = 0.1;
  EXPECT_THROW(RunConfig::from_json(bad), ValidationError);
  const RunConfig toy = load_config(mt::data_dir() / "configs/toy.json");
  EXPECT_EQ(toy.train.steps, 2000);
  EXPECT_TRUE(fs::exists(toy.toy.urdf));
  RunConfig other = cfg;
  other.train.lr = 0.5;
  EXPECT_EQ(other.model_hash(), cfg.model_hash());
  other.model.denoiser.dim = 32;
  EXPECT_NE(other.model_hash(), cfg.model_hash());
}
