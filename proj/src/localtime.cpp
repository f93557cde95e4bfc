#include "heavyrange/localtime.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <unordered_map>

#include <boost/math/special_functions/gamma.hpp>

#include "heavyrange/errors.hpp"

namespace heavyrange {

std::string backend_name(Backend backend) {
  return backend == Backend::Step ? "step" : "branching";
}

Backend parse_backend(const std::string& name) {
  if (name == "step") return Backend::Step;
  if (name == "branching") return Backend::Branching;
  throw ConfigError("unknown backend '" + name + "' (expected step or branching)");
}

std::span<const FieldEntry> LocalTimeField::children_of(const FieldEntry& e) const {
  if (!e.expanded || e.num_children == 0) return {};
  return {entries_.data() + e.first_child, e.num_children};
}

std::uint64_t LocalTimeField::total_count() const {
  std::uint64_t s = 0;
  for (const auto& e : entries_) s += e.count;
  return s;
}

std::uint64_t LocalTimeField::max_count() const {
  std::uint64_t m = 0;
  for (const auto& e : entries_) m = std::max(m, e.count);
  return m;
}

std::uint32_t LocalTimeField::max_generation() const {
  std::uint32_t g = 0;
  for (const auto& e : entries_) {
    if (e.count > 0) g = std::max(g, e.depth);
  }
  return g;
}

std::uint64_t LocalTimeField::count_of(NodeId node) const {
  for (const auto& e : entries_) {
    if (e.node == node) return e.count;
  }
  return 0;
}

std::uint32_t LocalTimeField::push(const FieldEntry& entry) {
  if (entries_.size() >= kNoEntry) throw CapacityExceeded("field exceeds 2^32 entries");
  entries_.push_back(entry);
  return static_cast<std::uint32_t>(entries_.size() - 1);
}

namespace {

FieldEntry make_entry(const EnvTree& tree, NodeId node, std::uint32_t parent_index,
                      std::uint64_t count) {
  FieldEntry e;
  e.node = node;
  e.parent = parent_index;
  e.depth = tree.depth(node);
  e.count = count;
  e.omega = tree.omega(node);
  e.potential = tree.potential(node);
  return e;
}

bool below_limit(std::uint32_t depth, const std::optional<std::uint32_t>& limit) {
  return !limit || depth < *limit;
}

}  // namespace

LocalTimeField field_from_counts(const EnvTree& tree, std::span<const std::uint64_t> counts,
                                 std::uint64_t n, Backend backend, bool root_stood,
                                 std::optional<std::uint32_t> depth_limit) {
  LocalTimeField field(n, backend, depth_limit);
  const auto count_at = [&counts](NodeId x) -> std::uint64_t {
    return x < counts.size() ? counts[x] : 0;
  };
  if (count_at(kRoot) == 0 && !root_stood) {
    return field;
  }
  field.push(make_entry(tree, kRoot, kNoEntry, count_at(kRoot)));
  for (std::uint32_t i = 0; i < field.entries().size(); ++i) {
    const FieldEntry e = field.entries()[i];
    const bool stood = e.count > 0 || (i == 0 && root_stood);
    if (!stood || !below_limit(e.depth, depth_limit) || !tree.children_realized(e.node)) {
      continue;
    }
    const ChildRange kids = tree.realized_children(e.node);
    auto& parent = field.entry(i);
    parent.expanded = true;
    parent.num_children = kids.count;
    parent.first_child = static_cast<std::uint32_t>(field.entries().size());
    for (NodeId c : kids) field.push(make_entry(tree, c, i, count_at(c)));
  }
  return field;
}

LocalTimeField sample_field(EnvTree& tree, std::uint64_t n, Philox& rng,
                            const FieldOptions& options) {
  if (n == 0) throw DomainError("sample_field needs n >= 1");
  LocalTimeField field(n, Backend::Branching, options.depth_limit);
  field.push(make_entry(tree, kRoot, kNoEntry, n));
  std::uint64_t total = n;
  const auto over_limit = [&] { return options.count_limit && total > *options.count_limit; };
  if (over_limit()) {
    field.mark_incomplete();
    return field;
  }
  for (std::uint32_t i = 0; i < field.entries().size(); ++i) {
    const FieldEntry e = field.entries()[i];
    if (e.count == 0 || !below_limit(e.depth, options.depth_limit)) continue;
    const ChildRange kids = tree.children(e.node);
    auto& parent = field.entry(i);
    parent.expanded = true;
    parent.num_children = kids.count;
    parent.first_child = static_cast<std::uint32_t>(field.entries().size());
    if (kids.empty()) continue;
    std::gamma_distribution<double> intensity(static_cast<double>(e.count), 1.0);
    const double lambda = intensity(rng);
    for (NodeId c : kids) {
      const double mean = lambda * tree.weight(c);
      std::uint64_t count = 0;
      if (mean > 0.0) {
        std::poisson_distribution<std::uint64_t> poisson(mean);
        count = poisson(rng);
      }
      field.push(make_entry(tree, c, i, count));
      total += count;
    }
    if (over_limit()) {
      field.mark_incomplete();
      return field;
    }
  }
  return field;
}

FieldSummary summarize_field(const EnvTree& tree, std::uint64_t n, Philox& rng,
                             std::span<const std::uint64_t> levels, const FieldOptions& options,
                             std::size_t node_budget, bool censor) {
  if (n == 0) throw DomainError("summarize_field needs n >= 1");
  for (auto a : levels) {
    if (a == 0) throw DomainError("heavy range level must be >= 1");
  }
  struct Vertex {
    std::uint64_t key;
    std::uint64_t count;
  };
  FieldSummary out;
  out.heavy_ranges.assign(levels.size(), 0);
  const auto record = [&](std::uint64_t count) {
    out.total_count += count;
    for (std::size_t k = 0; k < levels.size(); ++k) out.heavy_ranges[k] += count >= levels[k];
  };
  const auto over_limit = [&] {
    return options.count_limit && out.total_count > *options.count_limit;
  };

  record(n);
  if (over_limit()) {
    out.incomplete = true;
    return out;
  }
  std::vector<Vertex> current{{tree.key(kRoot), n}}, next;
  std::vector<ChildDraw> draws;
  for (std::uint32_t depth = 0; !current.empty(); ++depth) {
    out.max_generation = depth;
    if (!below_limit(depth, options.depth_limit)) break;
    next.clear();
    for (const Vertex& v : current) {
      draw_children(tree.spec(), v.key, draws);
      out.nodes += draws.size();
      if (out.nodes > node_budget) {
        if (censor) {
          out.truncated = true;
          return out;
        }
        throw CapacityExceeded("field needs more than " + std::to_string(node_budget) +
                               " vertices");
      }
      if (draws.empty()) continue;
      std::gamma_distribution<double> intensity(static_cast<double>(v.count), 1.0);
      const double lambda = intensity(rng);
      for (const ChildDraw& d : draws) {
        const double mean = lambda * std::exp(-d.omega);
        std::uint64_t count = 0;
        if (mean > 0.0) {
          std::poisson_distribution<std::uint64_t> poisson(mean);
          count = poisson(rng);
        }
        if (count == 0) continue;
        record(count);
        next.push_back({d.key, count});
      }
      if (over_limit()) {
        out.incomplete = true;
        return out;
      }
    }
    current.swap(next);
  }
  return out;
}

std::uint64_t heavy_range(const LocalTimeField& field, std::uint64_t alpha) {
  if (alpha == 0) throw DomainError("heavy range level must be >= 1");
  std::uint64_t r = 0;
  for (const auto& e : field.entries()) {
    if (e.count >= alpha) ++r;
  }
  return r;
}

std::vector<std::uint64_t> heavy_ranges(const LocalTimeField& field,
                                        std::span<const std::uint64_t> alphas) {
  std::vector<std::uint64_t> counts;
  counts.reserve(field.entries().size());
  for (const auto& e : field.entries()) {
    if (e.count > 0) counts.push_back(e.count);
  }
  std::sort(counts.begin(), counts.end());
  std::vector<std::uint64_t> out;
  out.reserve(alphas.size());
  for (std::uint64_t alpha : alphas) {
    if (alpha == 0) throw DomainError("heavy range level must be >= 1");
    const auto it = std::lower_bound(counts.begin(), counts.end(), alpha);
    out.push_back(static_cast<std::uint64_t>(counts.end() - it));
  }
  return out;
}

std::uint64_t return_time(const LocalTimeField& field) { return 2 * field.total_count(); }

std::uint64_t excursion_hits(const EnvTree& tree, std::uint64_t n, NodeId x, Philox& rng) {
  const double a = tree.hitting_quantities(x).a;
  std::binomial_distribution<std::uint64_t> hits(n, std::min(1.0, a));
  return hits(rng);
}

double mean_matrix(const EnvSpec& spec, std::uint64_t i, std::uint64_t j) {
  if (i == 0) throw DomainError("mean matrix rows start at i = 1");
  const double log_binom = boost::math::lgamma(static_cast<double>(i + j)) -
                           boost::math::lgamma(static_cast<double>(j + 1)) -
                           boost::math::lgamma(static_cast<double>(i));
  return std::exp(log_binom) * spec.mean_offspring() *
         rho_moment(spec, static_cast<int>(i), static_cast<int>(j));
}

void FieldAccumulator::add(const LocalTimeField& field) {
  if (counts_.size() < tree_->size()) counts_.resize(tree_->size(), 0);
  for (const auto& e : field.entries()) {
    counts_[e.node] += e.count;
    total_ += e.count;
  }
  n_ += field.n();
}

LocalTimeField FieldAccumulator::build(Backend backend) const {
  return field_from_counts(*tree_, counts_, n_, backend);
}

void write_field_csv(std::ostream& out, const LocalTimeField& field) {
  out << "node_id,parent_id,depth,omega,V,N\n";
  const auto& entries = field.entries();
  out << std::setprecision(17);
  for (const auto& e : entries) {
    const NodeId parent = e.parent == kNoEntry ? kRootParent : entries[e.parent].node;
    out << e.node << ',' << parent << ',' << e.depth << ',' << e.omega << ',' << e.potential << ','
        << e.count << '\n';
  }
}

LocalTimeField read_field_csv(std::istream& in, Backend backend) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("node_id,parent_id,depth,omega,V,N", 0) != 0) {
    throw ConfigError("field file: missing header node_id,parent_id,depth,omega,V,N");
  }
  struct Row {
    NodeId node, parent;
    std::uint32_t depth;
    double omega, potential;
    std::uint64_t count;
  };
  std::vector<Row> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    Row r{};
    char c1, c2, c3, c4, c5;
    if (!(ss >> r.node >> c1 >> r.parent >> c2 >> r.depth >> c3 >> r.omega >> c4 >> r.potential >>
          c5 >> r.count) ||
        c1 != ',' || c2 != ',' || c3 != ',' || c4 != ',' || c5 != ',') {
      throw ConfigError("field file line " + std::to_string(line_no) + ": malformed row");
    }
    rows.push_back(r);
  }
  if (rows.empty()) return LocalTimeField(0, backend);

  // Group children by parent, preserving file order within siblings.
  std::unordered_map<NodeId, std::vector<std::size_t>> kids;
  std::size_t root_row = rows.size();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k].parent == kRootParent) {
      if (root_row != rows.size()) throw ConfigError("field file: more than one root row");
      root_row = k;
    } else {
      kids[rows[k].parent].push_back(k);
    }
  }
  if (root_row == rows.size()) throw ConfigError("field file: no root row (parent_id 0)");

  LocalTimeField field(rows[root_row].count, backend);
  const auto to_entry = [](const Row& r, std::uint32_t parent) {
    FieldEntry e;
    e.node = r.node;
    e.parent = parent;
    e.depth = r.depth;
    e.count = r.count;
    e.omega = r.omega;
    e.potential = r.potential;
    return e;
  };
  field.push(to_entry(rows[root_row], kNoEntry));
  for (std::uint32_t i = 0; i < field.entries().size(); ++i) {
    const FieldEntry e = field.entries()[i];
    const auto it = kids.find(e.node);
    const bool has_kids = it != kids.end();
    if (e.count == 0 && !has_kids) continue;
    auto& parent = field.entry(i);
    parent.expanded = true;
    parent.first_child = static_cast<std::uint32_t>(field.entries().size());
    parent.num_children = has_kids ? static_cast<std::uint32_t>(it->second.size()) : 0;
    if (!has_kids) continue;
    for (std::size_t k : it->second) field.push(to_entry(rows[k], i));
  }
  if (field.entries().size() != rows.size()) {
    throw ConfigError("field file: rows not connected to the root");
  }
  return field;
}

}  // namespace heavyrange
