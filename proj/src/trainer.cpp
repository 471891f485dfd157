#include "morphgrasp/trainer.hpp"

#include "morphgrasp/checkpoint.hpp"
#include "morphgrasp/errors.hpp"

#include <chrono>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>

namespace morphgrasp {

using json = nlohmann::ordered_json;

TrainingSet build_training_set(const GraspDataset& dataset, const RunConfig& config) {
  validate_dataset(dataset);
  TrainingSet set;
  for (std::size_t e = 0; e < dataset.embodiments.size(); ++e) {
    const auto& de = dataset.embodiments[e];
    set.embodiments.push_back(make_embodiment(de.tree, de.mapping, config.physics.hand_points, config.seed + e));
  }
  std::vector<PointMatrix> clouds;
  for (std::size_t o = 0; o < dataset.objects.size(); ++o) {
    clouds.push_back(resample_cloud(dataset.objects[o].model.points(), config.model.cloud_points,
                                    fnv1a(dataset.objects[o].id) ^ config.seed));
  }
  for (const auto& r : dataset.records) {
    const Embodiment& emb = set.embodiments[static_cast<std::size_t>(r.embodiment)];
    TrainingScene scene;
    scene.embodiment = r.embodiment;
    const ObjectModel& object = dataset.objects[static_cast<std::size_t>(r.object)].model;
    PointMatrix cloud = clouds[static_cast<std::size_t>(r.object)];
    if (config.diffusion.canonicalize) {
      CanonicalScene c = canonicalize_frame(r.pose, object);
      scene.pose = c.pose;
      scene.object = std::move(c.object);
      cloud = cloud * c.rotation;  // rows are points: (R^T p)^T = p^T R
    } else {
      scene.pose = r.pose;
      scene.object = object;
    }
    scene.grouping = group_cloud(cloud, config.model.points);
    scene.weights = joint_weights(emb.slot_descendants, emb.mask);
    set.scenes.push_back(std::move(scene));
  }
  return set;
}

namespace {

AdamConfig adam_config(const TrainConfig& t) {
  AdamConfig a;
  a.lr = t.lr;
  a.clip_norm = t.clip_norm;
  return a;
}

}  // namespace

Trainer::Trainer(const RunConfig& config, GraspModel& model, const TrainingSet& data)
    : config_(config),
      model_(model),
      data_(data),
      schedule_(DiffusionSchedule::from_config(config.diffusion)),
      optimizer_(adam_config(config.train), model.params()),
      rng_(config.seed ^ 0x9e3779b97f4a7c15ULL) {
  if (data_.scenes.empty()) throw ValidationError("trainer: empty training set");
}

TrainBatch Trainer::draw_batch(std::mt19937_64& rng) const {
  const int b = config_.train.batch_size;
  std::uniform_int_distribution<int> pick_row(0, static_cast<int>(data_.scenes.size()) - 1);
  std::uniform_int_distribution<int> pick_t(0, schedule_.T() - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  TrainBatch batch;
  batch.eps.resize(b, kPoseChannels);
  for (int r = 0; r < b; ++r) {
    batch.rows.push_back(pick_row(rng));
    batch.t.push_back(pick_t(rng));
    for (int c = 0; c < kPoseChannels; ++c) batch.eps(r, c) = normal(rng);
  }
  return batch;
}

LossReport Trainer::evaluate(const TrainBatch& batch, std::vector<double>* per_row) const {
  ad::NoGradGuard no_grad;
  return forward(batch, per_row).report;
}

LossReport Trainer::step() {
  const TrainBatch batch = draw_batch(rng_);
  return step(batch);
}

LossReport Trainer::step(const TrainBatch& batch) {
  const Forward f = forward(batch, nullptr);
  const TrainConfig& tc = config_.train;
  if (tc.lr_final >= 0.0 && tc.steps > 0) {
    const double progress = std::min(1.0, static_cast<double>(optimizer_.steps()) / tc.steps);
    optimizer_.set_lr(tc.lr_final + 0.5 * (tc.lr - tc.lr_final) * (1.0 + std::cos(std::numbers::pi * progress)));
  }
  model_.params().zero_grad();
  ad::backward(f.total);
  optimizer_.step(model_.params());
  return f.report;
}

Trainer::Forward Trainer::forward(const TrainBatch& batch, std::vector<double>* per_row) const {
  const auto b = static_cast<Eigen::Index>(batch.rows.size());
  if (b < 1 || batch.t.size() != batch.rows.size() || batch.eps.rows() != b || batch.eps.cols() != kPoseChannels) {
    throw ArityError("train step: malformed batch");
  }
  const bool canon = config_.diffusion.canonicalize;

  // Conditioning, computed once per distinct embodiment and scene.
  Conditioning cond;
  std::map<int, int> morph_slot, point_slot;
  std::vector<ActiveMask> masks;
  for (Eigen::Index r = 0; r < b; ++r) {
    const int row = batch.rows[static_cast<std::size_t>(r)];
    const TrainingScene& scene = data_.scenes.at(static_cast<std::size_t>(row));
    const Embodiment& emb = data_.embodiments[static_cast<std::size_t>(scene.embodiment)];
    auto [mit, m_new] = morph_slot.try_emplace(scene.embodiment, static_cast<int>(cond.morph.size()));
    if (m_new) cond.morph.push_back(model_.morph().encode(emb.morphology, model_.structure(), emb.mask));
    auto [pit, p_new] = point_slot.try_emplace(row, static_cast<int>(cond.points.size()));
    if (p_new) cond.points.push_back(model_.points().encode(scene.grouping));
    cond.morph_index.push_back(mit->second);
    cond.point_index.push_back(pit->second);
    masks.push_back(emb.mask);
  }

  Eigen::MatrixXd x0(b, kPoseChannels), x_t(b, kPoseChannels), keep = Eigen::MatrixXd::Ones(b, kPoseChannels);
  Eigen::MatrixXd frozen = Eigen::MatrixXd::Zero(b, kPoseChannels), wm(b, kPoseChannels);
  // x0-based terms are weighted by alpha_bar_t.
  Eigen::VectorXd eps_scale(b), x0_weight(b);
  std::vector<int> model_t;
  const Vector6 ident = identity_rot6();
  for (Eigen::Index r = 0; r < b; ++r) {
    const TrainingScene& scene = data_.scenes[static_cast<std::size_t>(batch.rows[static_cast<std::size_t>(r)])];
    const int t = batch.t[static_cast<std::size_t>(r)];
    const double ab = schedule_.alpha_bar(t);
    x0.row(r) = scene.pose.vector().transpose();
    x_t.row(r) = forward_noise(x0.row(r).transpose(), t, batch.eps.row(r).transpose(), schedule_).transpose();
    x0_weight(r) = ab;
    wm.row(r) = ab * morph_channel_weights(scene.weights, canon);
    if (canon) {
      x_t.row(r).segment<6>(kRotationOffset) = ident.transpose();
      keep.row(r).segment<6>(kRotationOffset).setZero();
      frozen.row(r).segment<6>(kRotationOffset) = ident.transpose();
    }
    eps_scale(r) = -std::sqrt(1.0 - ab) / std::sqrt(ab);
    model_t.push_back(schedule_.model_timestep(t));
  }

  const ad::Var eps_hat = model_.denoiser().predict(ad::constant(x_t), mask_rows(masks), cond, model_t);

  // Reconstruction term over the diffused channels.
  const double channels = canon ? kPoseChannels - 6 : kPoseChannels;
  const ad::Var recon = recon_loss(eps_hat, batch.eps, canon);

  // x0 estimate from the predicted noise; frozen rotation channels stay at the identity.
  Eigen::MatrixXd x_t_scaled = x_t;
  for (Eigen::Index r = 0; r < b; ++r) {
    x_t_scaled.row(r) /= std::sqrt(schedule_.alpha_bar(batch.t[static_cast<std::size_t>(r)]));
  }
  ad::Var x0_hat = ad::add_const(ad::row_scale(eps_hat, eps_scale), x_t_scaled);
  if (canon) x0_hat = ad::add_const(ad::mul(x0_hat, ad::constant(keep)), frozen);

  const ad::Var morph = morph_loss(x0_hat, x0, wm);

  const LossWeights& alpha = config_.alpha;
  const bool physics = alpha.spf != 0.0 || alpha.erf != 0.0 || alpha.srf != 0.0;
  std::vector<double> spf_row(static_cast<std::size_t>(b), 0.0), erf_row(spf_row), srf_row(spf_row);
  ad::Var phys = ad::constant(ad::Matrix::Zero(1, 1));
  if (physics) {
    std::vector<ad::Var> terms;
    for (Eigen::Index r = 0; r < b; ++r) {
      const auto ur = static_cast<std::size_t>(r);
      const TrainingScene& scene = data_.scenes[static_cast<std::size_t>(batch.rows[ur])];
      const Embodiment& emb = data_.embodiments[static_cast<std::size_t>(scene.embodiment)];
      std::vector<int> links;
      links.reserve(emb.surface.size());
      for (const auto& s : emb.surface) links.push_back(s.link);
      const ad::Var pts = hand_surface_points(ad::slice_rows(x0_hat, r, 1), emb);
      const ad::Var spf = spf_loss(pts, scene.object, config_.physics);
      const ad::Var erf = erf_loss(pts, scene.object);
      const ad::Var srf = srf_loss(pts, links, &emb.tree, config_.physics);
      const double w = x0_weight(r);
      spf_row[ur] = w * spf.value()(0, 0);
      erf_row[ur] = w * erf.value()(0, 0);
      srf_row[ur] = w * srf.value()(0, 0);
      terms.push_back(ad::add(ad::add(ad::scale(spf, w * alpha.spf), ad::scale(erf, w * alpha.erf)),
                              ad::scale(srf, w * alpha.srf)));
    }
    // Fixed-order reduction.
    phys = terms.front();
    for (std::size_t k = 1; k < terms.size(); ++k) phys = ad::add(phys, terms[k]);
    phys = ad::scale(phys, 1.0 / static_cast<double>(b));
  }

  auto mean_of = [&](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  LossReport report = total_loss(recon.value()(0, 0), morph.value()(0, 0), mean_of(spf_row), mean_of(erf_row),
                                 mean_of(srf_row), alpha);

  if (per_row) {
    const Eigen::MatrixXd err = (eps_hat.value() - batch.eps).array().square().matrix().cwiseProduct(keep);
    const Eigen::MatrixXd msq = (x0_hat.value() - x0).array().square().matrix().cwiseProduct(wm);
    per_row->assign(static_cast<std::size_t>(b), 0.0);
    for (Eigen::Index r = 0; r < b; ++r) {
      const auto ur = static_cast<std::size_t>(r);
      (*per_row)[ur] = err.row(r).sum() / channels + msq.row(r).sum() + alpha.spf * spf_row[ur] +
                       alpha.erf * erf_row[ur] + alpha.srf * srf_row[ur];
    }
  }

  return {report, ad::add(ad::add(recon, morph), phys)};
}

LossReport run_training(const RunConfig& config, const GraspDataset& dataset, const TrainRunOptions& options) {
  namespace fs = std::filesystem;
  fs::create_directories(options.out_dir);
  const fs::path ckpt = options.out_dir / "checkpoint.mgck";
  const fs::path state = options.out_dir / "train_state.bin";
  const fs::path metrics = options.out_dir / "metrics.jsonl";

  json echoed = config.to_json();
  echoed["tool_version"] = MORPHGRASP_VERSION;
  {
    std::ofstream out(options.out_dir / "config.json");
    if (!out) throw IoError("cannot write run config into '" + options.out_dir.string() + "'");
    out << echoed.dump(2) << "\n";
  }

  const TrainingSet set = build_training_set(dataset, config);
  GraspModel model(config.model, config.seed);
  Trainer trainer(config, model, set);
  if (options.resume) {
    if (!fs::exists(state)) throw StateError("resume: no train state in '" + options.out_dir.string() + "'");
    load_train_state(state, model, trainer.optimizer(), trainer.rng());
  }

  std::ofstream log(metrics, options.resume ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot write metrics log '" + metrics.string() + "'");
  LossReport last;
  for (auto step = trainer.optimizer().steps(); step < config.train.steps; ++step) {
    const auto start = std::chrono::steady_clock::now();
    try {
      last = trainer.step();
    } catch (const NumericError&) {
      log.flush();
      throw;
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    const auto done = step + 1;
    json rec = {{"step", done},   {"recon", last.recon}, {"morph", last.morph}, {"spf", last.spf},
                {"erf", last.erf}, {"srf", last.srf},     {"total", last.total}, {"wall_ms", ms}};
    if (config.train.log_every > 0 && (done % config.train.log_every == 0 || done == config.train.steps)) {
      log << rec.dump() << "\n";
      if (options.log) *options.log << rec.dump() << "\n";
    }
    if ((config.train.checkpoint_every > 0 && done % config.train.checkpoint_every == 0) ||
        done == config.train.steps) {
      save_checkpoint(ckpt, model, config);
      save_train_state(state, model, trainer.optimizer(), trainer.rng());
    }
  }
  return last;
}

std::vector<CanonicalPose> sample_grasps(const GraspModel& model, const RunConfig& config, const Embodiment& hand,
                                         const ObjectModel& object, int n, std::uint64_t seed) {
  ad::NoGradGuard no_grad;
  const PointMatrix cloud = resample_cloud(object.points(), config.model.cloud_points, seed);
  const Eigen::MatrixXd points = model.points().encode(group_cloud(cloud, config.model.points)).value();
  const Eigen::MatrixXd morph = model.morph().encode(hand.morphology, model.structure(), hand.mask).value();
  DiffusionSchedule schedule = DiffusionSchedule::from_config(config.diffusion);
  if (config.sample.steps > 0 && config.sample.steps < schedule.T()) schedule = schedule.respaced(config.sample.steps);
  SampleOptions options;
  options.n = n;
  options.seed = seed;
  options.canonicalize = config.diffusion.canonicalize;
  return sample(model, morph, hand.mask, points, schedule, options);
}

double mean_nearest_distance(const std::vector<CanonicalPose>& poses, const std::vector<CanonicalPose>& reference) {
  if (poses.empty() || reference.empty()) throw DomainError("mean_nearest_distance: empty pose set");
  double total = 0.0;
  for (const auto& p : poses) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : reference) best = std::min(best, (p.vector() - q.vector()).norm());
    total += best;
  }
  return total / static_cast<double>(poses.size());
}

}  // namespace morphgrasp
