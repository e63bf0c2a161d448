#pragma once

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>

#include "chipnet/common.hpp"
#include "chipnet/tensor.hpp"

namespace chipnet {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
};

/// Cell-wise confusion counting; cells under the don't-care mask are skipped.
inline ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt,
                                 const BinaryMask* dontcare = nullptr) {
  if (!pred.same_shape(gt)) throw ShapeError("confusion: prediction/ground-truth shape mismatch");
  if (dontcare && !dontcare->same_shape(gt))
    throw ShapeError("confusion: don't-care mask shape mismatch");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.v.size(); ++i) {
    if (dontcare && dontcare->v[i]) continue;
    const bool p = pred.v[i] != 0;
    const bool t = gt.v[i] != 0;
    if (p && t)
      ++c.tp;
    else if (p && !t)
      ++c.fp;
    else if (!p && t)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

/// A degenerate denominator yields an empty optional rather than a silent 0
/// or 1.
struct MetricsReport {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  std::optional<double> ap;  // accuracy, (TP+TN)/total
  std::optional<double> fpr;
  std::optional<double> fnr;
};

inline MetricsReport metrics(const ConfusionCounts& c) {
  MetricsReport m;
  const auto ratio = [](std::uint64_t num, std::uint64_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  if (m.precision && m.recall && (*m.precision + *m.recall) > 0.0)
    m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
  m.ap = ratio(c.tp + c.tn, c.total());
  m.fpr = ratio(c.fp, c.fp + c.tn);
  m.fnr = ratio(c.fn, c.fn + c.tp);
  return m;
}

namespace detail {

inline std::string metric_cell(const std::optional<double>& v) {
  if (!v) return "n/a";
  std::ostringstream os;
  os.precision(4);
  os << std::fixed << (*v * 100.0);
  return os.str();
}

inline std::string metric_json(const std::optional<double>& v) {
  if (!v) return "null";
  std::ostringstream os;
  os.precision(10);
  os << *v;
  return os.str();
}

}  // namespace detail

/// Fixed-column table with the benchmark's column order.
inline std::string render_metrics_table(const MetricsReport& m) {
  std::ostringstream os;
  os << "F1 %      AP %      PRE %     REC %     FPR %     FNR %\n";
  for (const auto* v : {&m.f1, &m.ap, &m.precision, &m.recall, &m.fpr, &m.fnr}) {
    std::string cell = detail::metric_cell(*v);
    cell.resize(10, ' ');
    os << cell;
  }
  os << "\n";
  return os.str();
}

inline std::string render_metrics_json(const MetricsReport& m, const ConfusionCounts& c) {
  std::ostringstream os;
  os << "{\"tp\":" << c.tp << ",\"fp\":" << c.fp << ",\"tn\":" << c.tn << ",\"fn\":" << c.fn
     << ",\"precision\":" << detail::metric_json(m.precision)
     << ",\"recall\":" << detail::metric_json(m.recall) << ",\"f1\":" << detail::metric_json(m.f1)
     << ",\"ap\":" << detail::metric_json(m.ap) << ",\"fpr\":" << detail::metric_json(m.fpr)
     << ",\"fnr\":" << detail::metric_json(m.fnr) << "}";
  return os.str();
}

}  // namespace chipnet
