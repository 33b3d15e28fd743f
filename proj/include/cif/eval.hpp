#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cif/data.hpp"
#include "cif/splat.hpp"

namespace cif {

/// Per-pixel argmax over {R (label 0), M_1..M_K}; ties go to the lowest label.
LabelImage panoptic_map(const RenderBuffers& buffers);

struct FrameMetrics {
  double pixel_accuracy = 0.0;
  std::optional<double> instance_accuracy;  // empty when no instance is present in gt
  std::optional<double> iou;
  std::map<int, double> instance_iou;       // gt-present instances only
};

FrameMetrics frame_metrics(const LabelImage& pred, const LabelImage& gt);

struct MetricReport {
  double macc_pix = 0.0;
  double macc_inst = 0.0;
  double miou = 0.0;
  std::size_t frames = 0;
  std::map<int, double> instance_iou;  // mean over frames where the instance is present
  std::vector<FrameMetrics> per_frame;
};

MetricReport evaluate(const std::vector<LabelImage>& pred, const std::vector<LabelImage>& gt);

double macc_pix(const std::vector<LabelImage>& pred, const std::vector<LabelImage>& gt);
double macc_inst(const std::vector<LabelImage>& pred, const std::vector<LabelImage>& gt);
double miou(const std::vector<LabelImage>& pred, const std::vector<LabelImage>& gt);

std::string format_table(const MetricReport& report);
/// Flat `key = value` lines, one per aggregate, instance and frame.
std::string format_key_values(const MetricReport& report);

}  // namespace cif
