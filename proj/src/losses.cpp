#include "rfbtd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "rfbtd/errors.hpp"

namespace rfbtd {

namespace {

bool positive(double s) { return s > 0.5; }

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace

double dice_loss(std::span<const double> pred, std::span<const double> gt, std::span<const double> mask,
                 std::span<double> grad, double eps) {
  const std::size_t n = pred.size();
  require(gt.size() == n && mask.size() == n, "dice_loss: grid sizes differ");
  require(grad.empty() || grad.size() == n, "dice_loss: gradient size differs");
  double inter = 0.0, sum_p = 0.0, sum_g = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    inter += pred[i] * gt[i] * mask[i];
    sum_p += pred[i] * mask[i];
    sum_g += gt[i] * mask[i];
  }
  const double num = 2.0 * inter + eps;
  const double den = sum_p + sum_g + eps;
  if (!grad.empty()) {
    const double den2 = den * den;
    for (std::size_t i = 0; i < n; ++i) grad[i] = -(2.0 * gt[i] * mask[i] * den - num * mask[i]) / den2;
  }
  return 1.0 - num / den;
}

double iou_loss(std::span<const double> pred, std::span<const double> gt, std::span<const double> gt_score,
                std::span<double> grad, IouLossOptions opt) {
  const std::size_t n = gt_score.size();
  require(pred.size() >= 4 * n && gt.size() >= 4 * n, "iou_loss: geometry grids too small");
  require(grad.empty() || grad.size() >= 4 * n, "iou_loss: gradient size differs");
  std::size_t npos = 0;
  for (std::size_t i = 0; i < n; ++i) npos += positive(gt_score[i]) ? 1 : 0;
  if (!grad.empty()) std::fill(grad.begin(), grad.begin() + static_cast<std::ptrdiff_t>(4 * n), 0.0);
  if (npos == 0) return 0.0;

  const double s = opt.smoothing;
  const double inv = 1.0 / static_cast<double>(npos);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!positive(gt_score[i])) continue;
    const double pt = pred[i], pr = pred[n + i], pb = pred[2 * n + i], pl = pred[3 * n + i];
    const double gt_t = gt[i], gt_r = gt[n + i], gt_b = gt[2 * n + i], gt_l = gt[3 * n + i];
    if (pt < 0 || pr < 0 || pb < 0 || pl < 0 || gt_t < 0 || gt_r < 0 || gt_b < 0 || gt_l < 0)
      throw std::domain_error("iou_loss: negative distance at pixel " + std::to_string(i));

    const double area_p = (pt + pb) * (pl + pr);
    const double area_g = (gt_t + gt_b) * (gt_l + gt_r);
    const double wi = std::min(pr, gt_r) + std::min(pl, gt_l);
    const double hi = std::min(pt, gt_t) + std::min(pb, gt_b);
    const double inter = wi * hi;
    const double uni = area_p + area_g - inter;
    total += -std::log((inter + s) / (uni + s));

    if (!grad.empty()) {
      // dI/dd for each side: the min() picks the prediction when it is smaller.
      const double di_t = pt < gt_t ? wi : 0.0;
      const double di_b = pb < gt_b ? wi : 0.0;
      const double di_r = pr < gt_r ? hi : 0.0;
      const double di_l = pl < gt_l ? hi : 0.0;
      const double da_tb = pl + pr;
      const double da_lr = pt + pb;
      const double ki = 1.0 / (inter + s);
      const double ku = 1.0 / (uni + s);
      grad[i] = inv * (-di_t * ki + (da_tb - di_t) * ku);
      grad[n + i] = inv * (-di_r * ki + (da_lr - di_r) * ku);
      grad[2 * n + i] = inv * (-di_b * ki + (da_tb - di_b) * ku);
      grad[3 * n + i] = inv * (-di_l * ki + (da_lr - di_l) * ku);
    }
  }
  return total * inv;
}

double angle_loss(std::span<const double> pred, std::span<const double> gt, std::span<const double> gt_score,
                  std::span<double> grad) {
  const std::size_t n = gt_score.size();
  require(pred.size() >= n && gt.size() >= n, "angle_loss: grid sizes differ");
  require(grad.empty() || grad.size() >= n, "angle_loss: gradient size differs");
  std::size_t npos = 0;
  for (std::size_t i = 0; i < n; ++i) npos += positive(gt_score[i]) ? 1 : 0;
  if (!grad.empty()) std::fill(grad.begin(), grad.begin() + static_cast<std::ptrdiff_t>(n), 0.0);
  if (npos == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(npos);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!positive(gt_score[i])) continue;
    const double d = pred[i] - gt[i];
    total += 1.0 - std::cos(d);
    if (!grad.empty()) grad[i] = inv * std::sin(d);
  }
  return total * inv;
}

LossReport total_loss(const LossInputs& in, const LossWeights& w, LossGradient* grad, IouLossOptions iou_opt) {
  const std::size_t n = in.pred_score.size();
  require(in.gt_score.size() == n && in.mask.size() == n, "total_loss: score grids differ");
  require(in.pred_geometry.size() == 5 * n && in.gt_geometry.size() == 5 * n, "total_loss: geometry grids differ");
  LossReport r;
  std::span<double> gs, gg;
  if (grad != nullptr) {
    grad->score.assign(n, 0.0);
    grad->geometry.assign(5 * n, 0.0);
    gs = grad->score;
    gg = grad->geometry;
  }
  r.score_loss = dice_loss(in.pred_score, in.gt_score, in.mask, gs);
  r.iou_term = iou_loss(in.pred_geometry, in.gt_geometry, in.gt_score, grad ? gg.first(4 * n) : std::span<double>{},
                        iou_opt);
  r.angle_term = angle_loss(in.pred_geometry.subspan(4 * n), in.gt_geometry.subspan(4 * n), in.gt_score,
                            grad ? gg.subspan(4 * n) : std::span<double>{});
  r.geo_loss = r.iou_term + w.lambda_theta * r.angle_term;
  r.total = r.score_loss + w.lambda_g * r.geo_loss;
  if (grad != nullptr) {
    for (std::size_t i = 0; i < 4 * n; ++i) gg[i] *= w.lambda_g;
    for (std::size_t i = 4 * n; i < 5 * n; ++i) gg[i] *= w.lambda_g * w.lambda_theta;
  }
  return r;
}

namespace {

std::vector<double> to_double(const Tensor& t, const char* name) {
  std::vector<double> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t.data[i])) throw NonFiniteError(name, i);
    out[i] = t.data[i];
  }
  return out;
}

}  // namespace

LossReport total_loss(const ModelOutput& pred, const TrainTarget& target, const LossWeights& w, OutputGrad* grad,
                      IouLossOptions iou_opt) {
  if (!pred.score.same_shape(target.score) || !pred.geometry.same_shape(target.geometry) ||
      !target.mask.same_shape(target.score))
    throw ShapeError("total_loss: prediction " + pred.score.shape_string() + "/" + pred.geometry.shape_string() +
                     " vs target " + target.score.shape_string() + "/" + target.geometry.shape_string());
  const auto ps = to_double(pred.score, "pred.score");
  const auto pg = to_double(pred.geometry, "pred.geometry");
  const auto ts = to_double(target.score, "target.score");
  const auto tg = to_double(target.geometry, "target.geometry");
  const auto tm = to_double(target.mask, "target.mask");
  LossGradient lg;
  const LossReport r = total_loss(LossInputs{ps, pg, ts, tg, tm}, w, grad ? &lg : nullptr, iou_opt);
  if (grad != nullptr) {
    grad->score = Tensor(pred.score.c, pred.score.h, pred.score.w);
    grad->geometry = Tensor(pred.geometry.c, pred.geometry.h, pred.geometry.w);
    std::transform(lg.score.begin(), lg.score.end(), grad->score.data.begin(),
                   [](double v) { return static_cast<float>(v); });
    std::transform(lg.geometry.begin(), lg.geometry.end(), grad->geometry.data.begin(),
                   [](double v) { return static_cast<float>(v); });
  }
  return r;
}

}  // namespace rfbtd
