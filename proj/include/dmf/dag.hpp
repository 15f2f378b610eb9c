#pragma once

// The searchable network: every ordered node pair (i, j), i < j, carries a
// MixedEdge and node j is the sum of its incoming edge outputs. Node 0 is
// the input, node n_cells-1 the prediction.

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmf/autodiff.hpp"
#include "dmf/candidate_ops.hpp"
#include "dmf/error.hpp"
#include "dmf/hexfloat.hpp"
#include "dmf/rng.hpp"

namespace dmf {

struct DagConfig {
  std::size_t n_cells = 3;  // total node count, input and output included
  std::size_t in_dim = 1;
  std::size_t out_dim = 1;
  std::size_t node_width = 20;

  void validate() const {
    if (n_cells < 2 || n_cells > 7) {
      throw ConfigError("n_cells must be in [2, 7], got " + std::to_string(n_cells));
    }
    if (in_dim == 0 || out_dim == 0 || node_width == 0) throw ConfigError("DAG dimensions must be positive");
  }

  friend bool operator==(const DagConfig&, const DagConfig&) = default;
};

struct DagEdge {
  std::size_t from;
  std::size_t to;
  MixedEdge edge;
};

class DmfNetwork {
 public:
  DmfNetwork(DagConfig config, std::vector<DagEdge> edges) : config_(config), edges_(std::move(edges)) {}

  const DagConfig& config() const { return config_; }
  const std::vector<DagEdge>& edges() const { return edges_; }
  std::vector<DagEdge>& edges() { return edges_; }

  const DagEdge& edge(std::size_t from, std::size_t to) const {
    for (const auto& e : edges_) {
      if (e.from == from && e.to == to) return e;
    }
    throw ConfigError("no edge (" + std::to_string(from) + ", " + std::to_string(to) + ")");
  }

  Var forward(Tape& tape, Var x) const {
    const Tensor& in = tape.value(x);
    if (in.rank() != 2 || in.cols() != config_.in_dim) {
      throw DimensionError("network expects n x " + std::to_string(config_.in_dim) + " input, got " +
                           shape_string(in.shape()));
    }
    std::vector<Var> nodes(config_.n_cells);
    std::vector<bool> seen(config_.n_cells, false);
    nodes[0] = x;
    seen[0] = true;
    // edges are stored grouped by target in increasing order
    for (const auto& e : edges_) {
      Var contribution = e.edge.forward(tape, nodes[e.from]);
      if (seen[e.to]) {
        nodes[e.to] = tape.add(nodes[e.to], contribution);
      } else {
        nodes[e.to] = contribution;
        seen[e.to] = true;
      }
    }
    return nodes.back();
  }

  Tensor predict(const Tensor& x) const {
    Tape t;
    return t.value(forward(t, t.constant(x)));
  }

  std::vector<ParamPtr> weight_parameters() const {
    std::vector<ParamPtr> ps;
    for (const auto& e : edges_) {
      auto p = e.edge.weight_parameters();
      ps.insert(ps.end(), p.begin(), p.end());
    }
    return ps;
  }

  std::vector<ParamPtr> architecture_parameters() const {
    std::vector<ParamPtr> ps;
    for (const auto& e : edges_) ps.push_back(e.edge.alpha());
    return ps;
  }

  std::size_t weight_count() const {
    std::size_t n = 0;
    for (const auto& e : edges_) n += e.edge.weight_count();
    return n;
  }

  // Deep copy with fresh parameter objects.
  DmfNetwork clone() const {
    std::vector<DagEdge> es;
    es.reserve(edges_.size());
    for (const auto& e : edges_) es.push_back(DagEdge{e.from, e.to, e.edge.clone()});
    return DmfNetwork(config_, std::move(es));
  }

 private:
  DagConfig config_;
  std::vector<DagEdge> edges_;
};

// Width of node j under the construction rule.
inline std::size_t node_dim(const DagConfig& c, std::size_t j) {
  if (j == 0) return c.in_dim;
  if (j + 1 == c.n_cells) return c.out_dim;
  return c.node_width;
}

inline DmfNetwork build_dag(const DagConfig& config, std::uint64_t seed) {
  config.validate();
  std::vector<DagEdge> edges;
  std::uint64_t index = 0;
  for (std::size_t j = 1; j < config.n_cells; ++j) {
    for (std::size_t i = 0; i < j; ++i) {
      const std::string name = "e" + std::to_string(i) + std::to_string(j);
      edges.push_back(DagEdge{
          i, j, build_mixed_edge(node_dim(config, i), node_dim(config, j), derive_seed(seed, index++), name)});
    }
  }
  return DmfNetwork(config, std::move(edges));
}

inline Tensor dag_forward(const DmfNetwork& net, const Tensor& x) { return net.predict(x); }

struct NetworkGroups {
  ParamGroup weights;
  ParamGroup architecture;
};

inline NetworkGroups param_groups(const DmfNetwork& net) {
  return NetworkGroups{ParamGroup{GroupLabel::Weights, 0.0, net.weight_parameters()},
                       ParamGroup{GroupLabel::Architecture, 0.0, net.architecture_parameters()}};
}

// ---------------------------------------------------------------------------
// JSON serialization. Float arrays are hex-encoded so a round trip is
// bit-exact.

inline nlohmann::json tensor_to_json(const Tensor& t) {
  return nlohmann::json{{"shape", t.shape()}, {"data", encode_hex(t.values())}};
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
  return Tensor(j.at("shape").get<Shape>(), decode_hex(j.at("data").get<std::string>()));
}

inline nlohmann::json network_to_json(const DmfNetwork& net) {
  const auto& c = net.config();
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : net.edges()) {
    nlohmann::json ops = nlohmann::json::array();
    for (const auto& op : e.edge.ops()) {
      nlohmann::json layers = nlohmann::json::array();
      for (const auto& l : op.layers()) {
        layers.push_back({{"relu", l.relu}, {"weight", tensor_to_json(l.weight->value)},
                          {"bias", tensor_to_json(l.bias->value)}});
      }
      ops.push_back({{"kind", std::string(to_string(op.kind()))}, {"layers", layers}});
    }
    edges.push_back({{"from", e.from},
                     {"to", e.to},
                     {"in_dim", e.edge.in_dim()},
                     {"out_dim", e.edge.out_dim()},
                     {"alpha", encode_hex(e.edge.alpha()->value.values())},
                     {"ops", ops}});
  }
  return nlohmann::json{{"format", "dmf-network"},
                        {"version", 1},
                        {"config",
                         {{"n_cells", c.n_cells}, {"in_dim", c.in_dim}, {"out_dim", c.out_dim},
                          {"node_width", c.node_width}}},
                        {"edges", edges}};
}

inline DmfNetwork network_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "dmf-network") throw ParseError("not a dmf-network document");
    const auto& jc = j.at("config");
    DagConfig c{jc.at("n_cells").get<std::size_t>(), jc.at("in_dim").get<std::size_t>(),
                jc.at("out_dim").get<std::size_t>(), jc.at("node_width").get<std::size_t>()};
    c.validate();
    std::vector<DagEdge> edges;
    std::size_t want_from = 0, want_to = 1;
    for (const auto& je : j.at("edges")) {
      const auto from = je.at("from").get<std::size_t>();
      const auto to = je.at("to").get<std::size_t>();
      if (from != want_from || to != want_to) throw ParseError("edges out of canonical order");
      if (++want_from == want_to) {
        want_from = 0;
        ++want_to;
      }
      const auto in_dim = je.at("in_dim").get<std::size_t>();
      const auto out_dim = je.at("out_dim").get<std::size_t>();
      if (from >= to || to >= c.n_cells || in_dim != node_dim(c, from) || out_dim != node_dim(c, to)) {
        throw ParseError("edge (" + std::to_string(from) + ", " + std::to_string(to) +
                         ") inconsistent with network config");
      }
      const std::string name = "e" + std::to_string(from) + std::to_string(to);
      const auto& jops = je.at("ops");
      if (jops.size() != kNumOps) throw ParseError("edge must list exactly 5 operations");
      std::vector<CandidateOp> ops;
      for (std::size_t l = 0; l < kNumOps; ++l) {
        const OpKind kind = op_kind_from_string(jops[l].at("kind").get<std::string>());
        if (kind != kAllOps[l]) throw ParseError("operations out of canonical order");
        std::vector<DenseLayer> layers;
        std::size_t li = 0;
        for (const auto& jl : jops[l].at("layers")) {
          const std::string lname = name + "." + std::string(to_string(kind)) + "." + std::to_string(li++);
          Tensor w = tensor_from_json(jl.at("weight"));
          Tensor b = tensor_from_json(jl.at("bias"));
          if (w.rank() != 2 || b.size() != w.shape()[1]) throw ParseError("layer weight/bias shapes disagree");
          layers.push_back(DenseLayer{make_param(lname + ".W", std::move(w)), make_param(lname + ".b", std::move(b)),
                                      jl.at("relu").get<bool>()});
        }
        ops.emplace_back(kind, in_dim, out_dim, std::move(layers));
      }
      Tensor alpha(Shape{kNumOps}, decode_hex(je.at("alpha").get<std::string>()));
      edges.push_back(DagEdge{from, to,
                              MixedEdge({std::move(ops[0]), std::move(ops[1]), std::move(ops[2]), std::move(ops[3]),
                                         std::move(ops[4])},
                                        make_param(name + ".alpha", std::move(alpha)))});
    }
    if (edges.size() != c.n_cells * (c.n_cells - 1) / 2) throw ParseError("wrong number of edges");
    return DmfNetwork(c, std::move(edges));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed network document: ") + e.what());
  } catch (const DimensionError& e) {
    throw ParseError(std::string("malformed network document: ") + e.what());
  }
}

}  // namespace dmf
