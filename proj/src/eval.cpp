#include "cif/eval.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <set>
#include <sstream>
#include <string>

#include "cif/error.hpp"

namespace cif {

LabelImage panoptic_map(const RenderBuffers& buffers) {
  LabelImage out = LabelImage::zeros(buffers.width, buffers.height);
  const std::size_t k = static_cast<std::size_t>(buffers.instances);
  for (std::size_t p = 0; p < buffers.pixels(); ++p) {
    double best = buffers.residual[p];
    int label = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const double m = buffers.marginals[p * k + j];
      if (m > best) {
        best = m;
        label = static_cast<int>(j) + 1;
      }
    }
    out.labels[p] = label;
  }
  return out;
}

FrameMetrics frame_metrics(const LabelImage& pred, const LabelImage& gt) {
  if (pred.width != gt.width || pred.height != gt.height || pred.labels.size() != gt.labels.size()) {
    fail(ErrorCode::DimensionMismatch, "prediction and ground truth differ in size");
  }
  FrameMetrics m;
  if (gt.labels.empty()) return m;
  // per instance: gt pixels, correct gt pixels, pred pixels
  std::map<int, std::array<std::size_t, 3>> counts;
  std::size_t correct = 0;
  for (std::size_t p = 0; p < gt.labels.size(); ++p) {
    const int g = gt.labels[p];
    const int q = pred.labels[p];
    if (g == q) ++correct;
    if (g > 0) {
      auto& c = counts[g];
      ++c[0];
      if (g == q) ++c[1];
    }
    if (q > 0) ++counts[q][2];
  }
  m.pixel_accuracy = static_cast<double>(correct) / static_cast<double>(gt.labels.size());
  double acc = 0.0;
  double iou = 0.0;
  std::size_t present = 0;
  for (const auto& [label, c] : counts) {
    if (c[0] == 0) continue;
    ++present;
    acc += static_cast<double>(c[1]) / static_cast<double>(c[0]);
    const double value = static_cast<double>(c[1]) / static_cast<double>(c[0] + c[2] - c[1]);
    m.instance_iou[label] = value;
    iou += value;
  }
  if (present > 0) {
    m.instance_accuracy = acc / static_cast<double>(present);
    m.iou = iou / static_cast<double>(present);
  }
  return m;
}

MetricReport evaluate(const std::vector<LabelImage>& pred, const std::vector<LabelImage>& gt) {
  if (pred.size() != gt.size()) fail(ErrorCode::DimensionMismatch, "prediction and ground truth frame counts differ");
  for (std::size_t f = 0; f < gt.size(); ++f) {
    if (pred[f].width != gt[f].width || pred[f].height != gt[f].height) {
      fail(ErrorCode::DimensionMismatch, "frame " + std::to_string(f) + ": prediction and ground truth differ in size");
    }
  }
  MetricReport r;
  r.frames = gt.size();
  r.per_frame.resize(gt.size());
#ifdef CIF_HAVE_OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (std::ptrdiff_t f = 0; f < static_cast<std::ptrdiff_t>(gt.size()); ++f) {
    r.per_frame[static_cast<std::size_t>(f)] = frame_metrics(pred[static_cast<std::size_t>(f)], gt[static_cast<std::size_t>(f)]);
  }
  std::size_t instance_frames = 0;
  std::map<int, std::size_t> seen;
  for (const FrameMetrics& m : r.per_frame) {
    r.macc_pix += m.pixel_accuracy;
    if (m.instance_accuracy) {
      ++instance_frames;
      r.macc_inst += *m.instance_accuracy;
      r.miou += *m.iou;
    }
    for (const auto& [label, value] : m.instance_iou) {
      r.instance_iou[label] += value;
      ++seen[label];
    }
  }
  if (r.frames > 0) r.macc_pix /= static_cast<double>(r.frames);
  if (instance_frames > 0) {
    r.macc_inst /= static_cast<double>(instance_frames);
    r.miou /= static_cast<double>(instance_frames);
  }
  for (auto& [label, value] : r.instance_iou) value /= static_cast<double>(seen[label]);
  return r;
}

double macc_pix(const std::vector<LabelImage>& pred, const std::vector<LabelImage>& gt) {
  return evaluate(pred, gt).macc_pix;
}
double macc_inst(const std::vector<LabelImage>& pred, const std::vector<LabelImage>& gt) {
  return evaluate(pred, gt).macc_inst;
}
double miou(const std::vector<LabelImage>& pred, const std::vector<LabelImage>& gt) {
  return evaluate(pred, gt).miou;
}

namespace {
std::string fixed(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}
}  // namespace

std::string format_table(const MetricReport& report) {
  std::ostringstream out;
  out << "frames     " << report.frames << "\n";
  out << "mAcc-pix   " << fixed(report.macc_pix) << "\n";
  out << "mAcc-inst  " << fixed(report.macc_inst) << "\n";
  out << "mIoU       " << fixed(report.miou) << "\n";
  if (!report.instance_iou.empty()) {
    out << "instance   IoU\n";
    for (const auto& [label, value] : report.instance_iou) {
      std::string id = std::to_string(label);
      id.resize(std::max<std::size_t>(id.size(), 11), ' ');
      out << id << fixed(value) << "\n";
    }
  }
  return out.str();
}

std::string format_key_values(const MetricReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "frames = " << report.frames << "\n";
  out << "macc_pix = " << report.macc_pix << "\n";
  out << "macc_inst = " << report.macc_inst << "\n";
  out << "miou = " << report.miou << "\n";
  for (const auto& [label, value] : report.instance_iou) out << "instance." << label << ".iou = " << value << "\n";
  for (std::size_t f = 0; f < report.per_frame.size(); ++f) {
    const FrameMetrics& m = report.per_frame[f];
    out << "frame." << f << ".macc_pix = " << m.pixel_accuracy << "\n";
    if (m.instance_accuracy) {
      out << "frame." << f << ".macc_inst = " << *m.instance_accuracy << "\n";
      out << "frame." << f << ".miou = " << *m.iou << "\n";
    }
  }
  return out.str();
}

}  // namespace cif
