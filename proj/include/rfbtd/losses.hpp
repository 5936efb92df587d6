#pragma once

// Training objectives. Everything is evaluated in double precision over
// flattened grids; geometry grids are planar (channel-major), four distance
// planes (top, right, bottom, left) followed by the angle plane.
//
// Every loss optionally writes dLoss/dPrediction into a caller-sized span.

#include <span>
#include <vector>

#include "rfbtd/labelgen.hpp"
#include "rfbtd/network.hpp"

namespace rfbtd {

struct LossWeights {
  double lambda_g = 1.0;
  double lambda_theta = 10.0;
};

struct LossReport {
  double total = 0.0;
  double score_loss = 0.0;
  double geo_loss = 0.0;
  double iou_term = 0.0;
  double angle_term = 0.0;
};

inline constexpr double kDiceEpsilon = 1e-5;

struct IouLossOptions {
  // Added to both intersection and union area (px^2) so that -ln never sees 0.
  double smoothing = 1.0;
};

// 1 - (2 sum(p g m) + eps) / (sum(p m) + sum(g m) + eps)
double dice_loss(std::span<const double> pred, std::span<const double> gt, std::span<const double> mask,
                 std::span<double> grad = {}, double eps = kDiceEpsilon);

// Mean of -ln(IoU) over pixels with gt_score > 0.5. Both geometry spans hold
// at least four planes of gt_score.size() values; grad likewise.
double iou_loss(std::span<const double> pred_geometry, std::span<const double> gt_geometry,
                std::span<const double> gt_score, std::span<double> grad = {}, IouLossOptions opt = {});

// Mean of 1 - cos(pred - gt) over pixels with gt_score > 0.5.
double angle_loss(std::span<const double> pred_theta, std::span<const double> gt_theta,
                  std::span<const double> gt_score, std::span<double> grad = {});

struct LossInputs {
  std::span<const double> pred_score;
  std::span<const double> pred_geometry;  // 5 planes
  std::span<const double> gt_score;
  std::span<const double> gt_geometry;    // 5 planes
  std::span<const double> mask;
};

struct LossGradient {
  std::vector<double> score;
  std::vector<double> geometry;
};

LossReport total_loss(const LossInputs& in, const LossWeights& w, LossGradient* grad = nullptr,
                      IouLossOptions iou_opt = {});

// Model-facing overload: checks shapes and finiteness (throws NonFiniteError
// naming the grid and flat index) and converts the gradient back to floats.
LossReport total_loss(const ModelOutput& pred, const TrainTarget& target, const LossWeights& w,
                      OutputGrad* grad = nullptr, IouLossOptions iou_opt = {});

}  // namespace rfbtd
