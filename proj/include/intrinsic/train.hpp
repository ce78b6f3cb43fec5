#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "intrinsic/checkpoint.hpp"
#include "intrinsic/errors.hpp"
#include "intrinsic/image.hpp"
#include "intrinsic/networks.hpp"
#include "intrinsic/rng.hpp"
#include "intrinsic/synth.hpp"

namespace intrinsic {

// ---------------------------------------------------------------------------
// Augmentation: random horizontal/vertical flips plus a pixel shift with zero
// fill. The same transform is applied to the input and every target, so
// composed quantities stay consistent (zero fill multiplies to zero).
// ---------------------------------------------------------------------------

struct Augmentation {
  bool flip_h = false;
  bool flip_v = false;
  int shift_x = 0;
  int shift_y = 0;
};

inline Augmentation sample_augmentation(Rng& rng, int max_shift) {
  Augmentation a;
  a.flip_h = rng.bernoulli(0.5);
  a.flip_v = rng.bernoulli(0.5);
  a.shift_x = rng.uniform_int(-max_shift, max_shift);
  a.shift_y = rng.uniform_int(-max_shift, max_shift);
  return a;
}

inline Image apply_augmentation(const Image& im, const Augmentation& a) {
  Image out(im.height, im.width, im.channels);
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x) {
      int sy = y - a.shift_y, sx = x - a.shift_x;
      if (sy < 0 || sy >= im.height || sx < 0 || sx >= im.width) continue;  // zero fill
      if (a.flip_v) sy = im.height - 1 - sy;
      if (a.flip_h) sx = im.width - 1 - sx;
      for (int c = 0; c < im.channels; ++c) out.at(y, x, c) = im.at(sy, sx, c);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Training log: newline-delimited key=value records, one per step.
// ---------------------------------------------------------------------------

struct TrainRecord {
  int epoch = 0;
  std::int64_t step = 0;
  double lr = 0;
  double loss_cl = 0;
  double loss_imf = 0;
  double loss_total = 0;
};

struct TrainingLog {
  std::vector<TrainRecord> records;

  std::string to_text() const {
    std::string out;
    char line[256];
    for (const TrainRecord& r : records) {
      std::snprintf(line, sizeof(line),
                    "epoch=%d step=%lld lr=%.9e loss_cl=%.9e loss_imf=%.9e loss_total=%.9e\n",
                    r.epoch, static_cast<long long>(r.step), r.lr, r.loss_cl, r.loss_imf,
                    r.loss_total);
      out += line;
    }
    return out;
  }

  void write(const std::filesystem::path& path) const {
    std::ofstream f(path);
    if (!f) throw IoError("TrainingLog: cannot write " + path.string());
    f << to_text();
  }

  double epoch_mean_cl(int epoch) const {
    double s = 0;
    int n = 0;
    for (const TrainRecord& r : records)
      if (r.epoch == epoch) {
        s += r.loss_cl;
        ++n;
      }
    return n > 0 ? s / n : 0.0;
  }
};

struct TrainOptions {
  int epochs = 1;
  int batch_size = 16;
  LrSchedule schedule{1e-3, 1e-5, 0, 1.0};  // desk-scale default; total_steps 0 = fill in
  double fixed_lr = -1.0;                   // >= 0 bypasses the schedule
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
  bool augment = false;
  int max_shift = 5;
  std::filesystem::path out_dir;  // empty: no checkpoints written
  int checkpoint_every = 0;       // epochs between periodic checkpoints; 0 = final only
  std::int64_t start_step = 0;
  int start_epoch = 0;
};

// ---------------------------------------------------------------------------
// Checkpoint plumbing shared by every model type.
// ---------------------------------------------------------------------------

template <typename T, typename Model>
Checkpoint model_snapshot(Model& model, std::uint64_t step, const std::string& rng_state) {
  Checkpoint ckpt;
  ckpt.step = step;
  ckpt.rng_state = rng_state;
  for (Parameter<T>* p : model.parameters()) ckpt.params.push_back(to_entry(*p));
  for (auto& [name, state] : model.bn_states()) {
    Checkpoint::Buffer mean{name + ".running_mean",
                            std::vector<float>(state->running_mean.begin(),
                                               state->running_mean.end())};
    Checkpoint::Buffer var{name + ".running_var",
                           std::vector<float>(state->running_var.begin(),
                                              state->running_var.end())};
    ckpt.buffers.push_back(std::move(mean));
    ckpt.buffers.push_back(std::move(var));
  }
  return ckpt;
}

template <typename T, typename Model>
void model_restore(Model& model, const Checkpoint& ckpt) {
  auto params = model.parameters();
  for (Parameter<T>* p : params) {
    const Checkpoint::Entry* found = nullptr;
    for (const auto& e : ckpt.params)
      if (e.name == p->name) {
        found = &e;
        break;
      }
    if (!found) throw IoError("checkpoint: missing parameter '" + p->name + "'");
    restore_entry(*p, *found);
  }
  for (auto& [name, state] : model.bn_states()) {
    auto find_buffer = [&](const std::string& key) -> const Checkpoint::Buffer* {
      for (const auto& b : ckpt.buffers)
        if (b.name == key) return &b;
      return nullptr;
    };
    const Checkpoint::Buffer* mean = find_buffer(name + ".running_mean");
    const Checkpoint::Buffer* var = find_buffer(name + ".running_var");
    if (!mean || !var) throw IoError("checkpoint: missing batch-norm state '" + name + "'");
    state->running_mean.assign(mean->values.begin(), mean->values.end());
    state->running_var.assign(var->values.begin(), var->values.end());
  }
}

// ---------------------------------------------------------------------------
// Generic step loop. The batch callback builds the graph for one batch and
// returns the component losses; this loop owns shuffling, the schedule, SGD,
// logging and checkpoints. Per-sample augmentation seeds derive from
// (seed, epoch, sample index) so parallel prefetching could never change the
// draws.
// ---------------------------------------------------------------------------

template <typename T>
struct BatchLossValues {
  Tensor<T> total;
  double cl = 0;
  double imf = 0;
};

template <typename T>
TrainingLog run_training(
    const std::vector<Parameter<T>*>& params, int n_samples, const TrainOptions& opt,
    const std::function<BatchLossValues<T>(const std::vector<int>&, int epoch)>& batch_fn,
    const std::function<void(const std::string&, std::uint64_t)>& checkpoint_fn = {}) {
  if (n_samples < 1) throw UsageError("run_training: empty dataset");
  const int batch = std::min(opt.batch_size, n_samples);
  if (batch < 1) throw UsageError("run_training: batch size must be >= 1");
  const int steps_per_epoch = n_samples / batch;  // drop the ragged tail

  LrSchedule schedule = opt.schedule;
  if (schedule.total_steps == 0)
    schedule.total_steps =
        static_cast<std::int64_t>(opt.start_epoch + opt.epochs) * steps_per_epoch;
  if (opt.fixed_lr < 0) schedule.validate();

  TrainingLog log;
  std::int64_t step = opt.start_step;
  for (int epoch = opt.start_epoch + 1; epoch <= opt.start_epoch + opt.epochs; ++epoch) {
    // Fisher-Yates with the named sub-stream; std::shuffle is
    // implementation-defined and would break cross-run byte identity.
    std::vector<int> order(n_samples);
    for (int i = 0; i < n_samples; ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(opt.seed, "data", static_cast<std::uint64_t>(epoch)));
    for (int i = n_samples - 1; i > 0; --i) {
      const int j = shuffle_rng.uniform_int(0, i);
      std::swap(order[i], order[j]);
    }

    for (int b = 0; b < steps_per_epoch; ++b) {
      std::vector<int> indices(order.begin() + static_cast<std::size_t>(b) * batch,
                               order.begin() + static_cast<std::size_t>(b + 1) * batch);
      const double lr = opt.fixed_lr >= 0 ? opt.fixed_lr : poly_lr(schedule, step);
      BatchLossValues<T> loss;
      try {
        loss = batch_fn(indices, epoch);
      } catch (const NumericError& e) {
        std::string which;
        for (int i : indices) which += std::to_string(i) + " ";
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                           " step " + std::to_string(step) + " (batch samples: " + which + ")");
      }
      loss.total.backward();
      sgd_step(params, static_cast<T>(lr), static_cast<T>(opt.momentum),
               static_cast<T>(opt.weight_decay));
      ++step;
      log.records.push_back(TrainRecord{epoch, step, lr, loss.cl, loss.imf,
                                        static_cast<double>(loss.total.item())});
    }

    if (checkpoint_fn && opt.checkpoint_every > 0 &&
        (epoch - opt.start_epoch) % opt.checkpoint_every == 0 &&
        epoch != opt.start_epoch + opt.epochs)
      checkpoint_fn("checkpoint_epoch" + std::to_string(epoch) + ".ckpt",
                    static_cast<std::uint64_t>(step));
  }
  if (checkpoint_fn) checkpoint_fn("checkpoint_final.ckpt", static_cast<std::uint64_t>(step));
  return log;
}

namespace detail {

inline Image shading_target(const Sample& s) {
  return broadcast_channels(s.set.shading, 3);
}

template <typename T>
std::function<void(const std::string&, std::uint64_t)> file_checkpointer(
    const TrainOptions& opt, const std::function<Checkpoint(std::uint64_t)>& snap) {
  if (opt.out_dir.empty()) return {};
  const std::filesystem::path dir = opt.out_dir;
  std::filesystem::create_directories(dir);
  return [dir, snap](const std::string& name, std::uint64_t step) {
    save_checkpoint(dir / name, snap(step));
  };
}

}  // namespace detail

/// Trains an IntrinsicNet on image -> (reflectance, shading) pairs with the
/// combined loss and, when configured, the image formation loss.
template <typename T>
TrainingLog train_intrinsic_net(IntrinsicNet<T>& net, const std::vector<Sample>& data,
                                const TrainOptions& opt) {
  const auto params = net.parameters();
  const LossWeights& w = net.cfg.loss_weights;
  auto batch_fn = [&](const std::vector<int>& indices, int epoch) {
    std::vector<Image> images, refl, shad;
    for (int idx : indices) {
      const Sample& s = data[static_cast<std::size_t>(idx)];
      Augmentation a;
      if (opt.augment) {
        Rng arng(derive_seed(opt.seed, "aug",
                             (static_cast<std::uint64_t>(epoch) << 32) |
                                 static_cast<std::uint64_t>(idx)));
        a = sample_augmentation(arng, opt.max_shift);
      }
      images.push_back(apply_augmentation(s.image, a));
      refl.push_back(apply_augmentation(s.set.reflectance, a));
      shad.push_back(apply_augmentation(detail::shading_target(s), a));
    }
    const Tensor<T> input = images_to_batch<T>(images);
    const Tensor<T> target_r = images_to_batch<T>(refl);
    const Tensor<T> target_s = images_to_batch<T>(shad);
    auto out = net.forward(input, BnMode::Train);
    BatchLossValues<T> loss;
    Tensor<T> cl = combined_loss(out.reflectance, target_r, out.shading, target_s, w);
    loss.cl = static_cast<double>(cl.item());
    if (net.cfg.use_imf_loss) {
      Tensor<T> imf = image_formation_loss(out.reflectance, out.shading, input, w.gamma_imf);
      loss.imf = static_cast<double>(imf.item());
      loss.total = add_elem(cl, imf);
    } else {
      loss.total = cl;
    }
    return loss;
  };
  auto snap = [&](std::uint64_t step) {
    return model_snapshot<T>(net, step, std::to_string(opt.seed));
  };
  return run_training<T>(params, static_cast<int>(data.size()), opt, batch_fn,
                         detail::file_checkpointer<T>(opt, snap));
}

/// Stage-1 input: the image concatenated with its per-channel gradient
/// magnitude (6 channels).
inline Image stage1_input(const Image& image) {
  return concat_channels({image, gradient(image).magnitude});
}

/// Trains the RetiNet stage-1 network to split color gradients into intrinsic
/// gradient magnitudes.
template <typename T>
TrainingLog train_retinet_stage1(IntrinsicNet<T>& net, const std::vector<Sample>& data,
                                 const TrainOptions& opt) {
  const auto params = net.parameters();
  const LossWeights& w = net.cfg.loss_weights;
  auto batch_fn = [&](const std::vector<int>& indices, int epoch) {
    std::vector<Image> inputs, grad_r, grad_s;
    for (int idx : indices) {
      const Sample& s = data[static_cast<std::size_t>(idx)];
      Augmentation a;
      if (opt.augment) {
        Rng arng(derive_seed(opt.seed, "aug",
                             (static_cast<std::uint64_t>(epoch) << 32) |
                                 static_cast<std::uint64_t>(idx)));
        a = sample_augmentation(arng, opt.max_shift);
      }
      const Image image = apply_augmentation(s.image, a);
      inputs.push_back(stage1_input(image));
      grad_r.push_back(gradient(apply_augmentation(s.set.reflectance, a)).magnitude);
      grad_s.push_back(gradient(apply_augmentation(detail::shading_target(s), a)).magnitude);
    }
    const Tensor<T> input = images_to_batch<T>(inputs);
    const Tensor<T> target_r = images_to_batch<T>(grad_r);
    const Tensor<T> target_s = images_to_batch<T>(grad_s);
    auto out = net.forward(input, BnMode::Train);
    BatchLossValues<T> loss;
    loss.total = gradient_stage_loss(out.reflectance, target_r, out.shading, target_s, w);
    loss.cl = static_cast<double>(loss.total.item());
    return loss;
  };
  auto snap = [&](std::uint64_t step) {
    return model_snapshot<T>(net, step, std::to_string(opt.seed));
  };
  return run_training<T>(params, static_cast<int>(data.size()), opt, batch_fn,
                         detail::file_checkpointer<T>(opt, snap));
}

/// Trains RetiNet stage 2 on 9-channel inputs (image + intrinsic gradient
/// magnitudes) with the full loss. Gradients come from the ground truth when
/// `use_gt_gradients`, otherwise from a frozen stage-1 network.
template <typename T>
TrainingLog train_retinet_stage2(RetiNetStage2<T>& net, IntrinsicNet<T>* stage1,
                                 bool use_gt_gradients, const std::vector<Sample>& data,
                                 const TrainOptions& opt, const LossWeights& w) {
  if (!use_gt_gradients && stage1 == nullptr)
    throw UsageError("train_retinet_stage2: need a stage-1 network or ground-truth gradients");
  const auto params = net.parameters();
  auto batch_fn = [&](const std::vector<int>& indices, int epoch) {
    std::vector<Image> images, refl, shad;
    std::vector<Image> grads_r, grads_s;  // gt mode
    std::vector<Image> s1_inputs;         // predicted mode
    for (int idx : indices) {
      const Sample& s = data[static_cast<std::size_t>(idx)];
      Augmentation a;
      if (opt.augment) {
        Rng arng(derive_seed(opt.seed, "aug",
                             (static_cast<std::uint64_t>(epoch) << 32) |
                                 static_cast<std::uint64_t>(idx)));
        a = sample_augmentation(arng, opt.max_shift);
      }
      const Image image = apply_augmentation(s.image, a);
      images.push_back(image);
      refl.push_back(apply_augmentation(s.set.reflectance, a));
      shad.push_back(apply_augmentation(detail::shading_target(s), a));
      if (use_gt_gradients) {
        grads_r.push_back(gradient(refl.back()).magnitude);
        grads_s.push_back(gradient(shad.back()).magnitude);
      } else {
        s1_inputs.push_back(stage1_input(image));
      }
    }
    const Tensor<T> image_t = images_to_batch<T>(images);
    Tensor<T> grad_r_t, grad_s_t;
    if (use_gt_gradients) {
      grad_r_t = images_to_batch<T>(grads_r);
      grad_s_t = images_to_batch<T>(grads_s);
    } else {
      auto s1_out = stage1->forward(images_to_batch<T>(s1_inputs), BnMode::Eval);
      // Frozen stage 1: re-wrap the raw emissions as constants so no graph
      // or gradients build through it.
      grad_r_t = Tensor<T>::from_values(s1_out.reflectance.shape(),
                                        s1_out.reflectance.values());
      grad_s_t = Tensor<T>::from_values(s1_out.shading.shape(), s1_out.shading.values());
    }
    const Tensor<T> input = concat_c<T>({image_t, grad_r_t, grad_s_t});
    auto [r_hat, s_hat] = net.forward(input, BnMode::Train);
    const Tensor<T> target_r = images_to_batch<T>(refl);
    const Tensor<T> target_s = images_to_batch<T>(shad);
    BatchLossValues<T> loss;
    Tensor<T> cl = combined_loss(r_hat, target_r, s_hat, target_s, w);
    Tensor<T> imf = image_formation_loss(r_hat, s_hat, image_t, w.gamma_imf);
    loss.cl = static_cast<double>(cl.item());
    loss.imf = static_cast<double>(imf.item());
    loss.total = add_elem(cl, imf);
    return loss;
  };
  auto snap = [&](std::uint64_t step) {
    return model_snapshot<T>(net, step, std::to_string(opt.seed));
  };
  return run_training<T>(params, static_cast<int>(data.size()), opt, batch_fn,
                         detail::file_checkpointer<T>(opt, snap));
}

// ---------------------------------------------------------------------------
// Inference. Inputs whose extent is not divisible by 2^depth are padded by
// symmetric reflection and cropped back; outputs are clamped at zero outside
// any loss.
// ---------------------------------------------------------------------------

struct PadInfo {
  int top = 0, bottom = 0, left = 0, right = 0;
  bool padded() const { return top || bottom || left || right; }
};

namespace detail {

inline int reflect_idx(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

inline Image pad_reflect(const Image& im, const PadInfo& p) {
  if (!p.padded()) return im;
  Image out(im.height + p.top + p.bottom, im.width + p.left + p.right, im.channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      const int sy = reflect_idx(y - p.top, im.height);
      const int sx = reflect_idx(x - p.left, im.width);
      for (int c = 0; c < im.channels; ++c) out.at(y, x, c) = im.at(sy, sx, c);
    }
  return out;
}

inline Image crop(const Image& im, const PadInfo& p) {
  if (!p.padded()) return im;
  Image out(im.height - p.top - p.bottom, im.width - p.left - p.right, im.channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < im.channels; ++c) out.at(y, x, c) = im.at(y + p.top, x + p.left, c);
  return out;
}

inline PadInfo pad_for_depth(const Image& im, int depth) {
  const int div = 1 << depth;
  const int ph = (div - im.height % div) % div;
  const int pw = (div - im.width % div) % div;
  PadInfo p;
  p.top = ph / 2;
  p.bottom = ph - p.top;
  p.left = pw / 2;
  p.right = pw - p.left;
  return p;
}

inline Image clamp_nonnegative(Image im) {
  for (float& v : im.data) v = std::max(v, 0.0f);
  return im;
}

}  // namespace detail

struct DecomposeResult {
  IntrinsicSet set;
  PadInfo pad;  // symmetric padding applied (and cropped back) during inference
};

template <typename T>
DecomposeResult decompose_intrinsic_net(IntrinsicNet<T>& net, const Image& image) {
  DecomposeResult res;
  res.pad = detail::pad_for_depth(image, net.cfg.depth());
  const Image padded = detail::pad_reflect(image, res.pad);
  auto out = net.forward(image_to_tensor<T>(padded), BnMode::Eval);
  res.set.reflectance =
      detail::clamp_nonnegative(detail::crop(tensor_to_image(out.reflectance), res.pad));
  res.set.shading =
      detail::clamp_nonnegative(detail::crop(tensor_to_image(out.shading), res.pad));
  return res;
}

/// RetiNet inference: gradients -> stage 1 -> concat -> stage 2. Pass
/// ground-truth gradient magnitudes to run the oracle-gradient mode.
template <typename T>
DecomposeResult decompose_retinet(IntrinsicNet<T>& stage1, RetiNetStage2<T>& stage2,
                                  const Image& image,
                                  const std::optional<std::pair<Image, Image>>& gt_gradients =
                                      std::nullopt) {
  DecomposeResult res;
  res.pad = detail::pad_for_depth(image, stage1.cfg.depth());
  const Image padded = detail::pad_reflect(image, res.pad);
  const Tensor<T> image_t = image_to_tensor<T>(padded);

  Tensor<T> grad_r, grad_s;
  if (gt_gradients) {
    grad_r = image_to_tensor<T>(detail::pad_reflect(gt_gradients->first, res.pad));
    grad_s = image_to_tensor<T>(detail::pad_reflect(gt_gradients->second, res.pad));
  } else {
    auto s1_out = stage1.forward(image_to_tensor<T>(stage1_input(padded)), BnMode::Eval);
    grad_r = s1_out.reflectance;
    grad_s = s1_out.shading;
  }
  auto [r_hat, s_hat] = stage2.forward(concat_c<T>({image_t, grad_r, grad_s}), BnMode::Eval);
  res.set.reflectance =
      detail::clamp_nonnegative(detail::crop(tensor_to_image(r_hat), res.pad));
  res.set.shading = detail::clamp_nonnegative(detail::crop(tensor_to_image(s_hat), res.pad));
  return res;
}

}  // namespace intrinsic
