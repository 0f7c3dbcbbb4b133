#include <algorithm>
#include <cmath>
#include <map>

#include <boost/multiprecision/cpp_int.hpp>

#include "medmsa/ppl/inference.hpp"

namespace medmsa::ppl {
namespace {

// Exact sum of non-negative doubles as a fixed-point big integer, so the
// result does not depend on summation order.
class ExactSum {
 public:
  void add(double w) {
    if (w <= 0) return;
    int exp = 0;
    double frac = std::frexp(w, &exp);  // w = frac * 2^exp, frac in [0.5, 1)
    auto mantissa = static_cast<std::int64_t>(std::ldexp(frac, 53));
    boost::multiprecision::cpp_int term = mantissa;
    term <<= static_cast<unsigned>(exp - 53 + kOffset);
    total_ += term;
  }

  double value() const {
    if (total_ == 0) return 0;
    auto bits = static_cast<long>(boost::multiprecision::msb(total_)) + 1;
    long shift = std::max(0L, bits - 64);
    auto top = static_cast<std::uint64_t>(total_ >> static_cast<unsigned>(shift));
    return std::ldexp(static_cast<double>(top), static_cast<int>(shift) - kOffset);
  }

 private:
  static constexpr int kOffset = 1140;
  boost::multiprecision::cpp_int total_;
};

class TraceChoices : public ChoiceSource {
 public:
  struct Point {
    std::vector<std::pair<std::size_t, double>> alternatives;
    std::size_t position = 0;
  };

  explicit TraceChoices(std::vector<Point>& trace) : trace_(trace) {}

  bool flip(double p) override {
    std::vector<std::pair<std::size_t, double>> alts;
    if (p > 0) alts.emplace_back(1, p);
    if (p < 1) alts.emplace_back(0, 1.0 - p);
    return choose(std::move(alts)) == 1;
  }

  std::size_t categorical(std::span<const double> probs) override {
    std::vector<std::pair<std::size_t, double>> alts;
    for (std::size_t i = 0; i < probs.size(); ++i)
      if (probs[i] > 0) alts.emplace_back(i, probs[i]);
    return choose(std::move(alts));
  }

  double gaussian(double, double) override { throw ContinuousUnsupported(); }

  std::size_t consumed() const { return cursor_; }

  double weight() {
    std::sort(factors_.begin(), factors_.end());
    double w = 1.0;
    for (double f : factors_) w *= f;
    return w;
  }

 private:
  std::size_t choose(std::vector<std::pair<std::size_t, double>> alts) {
    if (cursor_ == trace_.size()) trace_.push_back(Point{std::move(alts), 0});
    const Point& pt = trace_[cursor_++];
    const auto& [value, prob] = pt.alternatives[pt.position];
    factors_.push_back(prob);
    return value;
  }

  std::vector<Point>& trace_;
  std::size_t cursor_ = 0;
  std::vector<double> factors_;
};

}  // namespace

const std::map<std::string, double>* ExactDistribution::find(const std::string& query) const {
  for (std::size_t i = 0; i < query_names.size(); ++i)
    if (query_names[i] == query) return &probabilities[i];
  return nullptr;
}

ExactDistribution enumerate(const Program& program, const EnumerateOptions& options) {
  if (program.has_continuous()) throw ContinuousUnsupported();

  ExactDistribution dist;
  for (const auto& q : program.queries()) dist.query_names.push_back(q.name);
  std::vector<std::map<std::string, ExactSum>> sums(dist.query_names.size());
  ExactSum evidence;

  std::vector<TraceChoices::Point> trace;
  for (;;) {
    TraceChoices choices(trace);
    Outcome out = execute(program, choices);
    if (++dist.paths > options.path_cap) throw PathExplosion(options.path_cap);
    trace.resize(choices.consumed());
    double w = choices.weight();
    if (out.accepted()) {
      evidence.add(w);
      for (std::size_t i = 0; i < out.sample.size(); ++i) sums[i][canonical_string(out.sample[i].second)].add(w);
    }
    while (!trace.empty() && trace.back().position + 1 >= trace.back().alternatives.size()) trace.pop_back();
    if (trace.empty()) break;
    ++trace.back().position;
  }

  dist.evidence = evidence.value();
  if (dist.evidence <= 0) throw ZeroEvidence();
  dist.probabilities.resize(sums.size());
  for (std::size_t i = 0; i < sums.size(); ++i)
    for (const auto& [key, s] : sums[i]) dist.probabilities[i][key] = s.value() / dist.evidence;
  return dist;
}

}  // namespace medmsa::ppl
