#include "gnncomm/trace.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "gnncomm/errors.hpp"

namespace gnncomm {

std::vector<double> EpisodeTrace::agent_returns() const {
  std::vector<double> out(n_agents(), 0.0);
  for (const auto& s : steps)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += s.rewards[i];
  return out;
}

double EpisodeTrace::mean_return() const {
  const auto r = agent_returns();
  if (r.empty()) return 0.0;
  return std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
}

std::size_t EpisodeTrace::total_messages() const {
  std::size_t n = 0;
  for (const auto& s : steps) n += s.messages;
  return n;
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string trace_to_jsonl(const EpisodeTrace& trace, std::size_t episode_index) {
  std::string out;
  for (const auto& s : trace.steps) {
    nlohmann::json j;
    j["episode"] = episode_index;
    j["t"] = s.t;
    nlohmann::json preds = nlohmann::json::array();
    for (const auto& p : s.state.predators) preds.push_back({p.row, p.col});
    j["state"] = {{"predators", preds}, {"prey", {s.state.prey.row, s.state.prey.col}}};
    j["observations"] = s.observations;
    j["actions"] = s.actions;
    j["rewards"] = s.rewards;
    j["done"] = s.done;
    j["proxy"] = s.proxy_used;
    j["messages"] = s.messages;
    nlohmann::json comm = nlohmann::json::array();
    for (const auto& c : s.comm) {
      nlohmann::json edges = nlohmann::json::array();
      for (const auto& e : c.edges) edges.push_back({e.src, e.dst});
      comm.push_back({{"agent", c.agent},
                      {"payload_digest", hex64(c.payload_digest)},
                      {"received", c.received},
                      {"edges", edges},
                      {"representation_norm", c.representation_norm},
                      {"messages_received", c.messages_received},
                      {"sent_to_proxy", c.sent_to_proxy}});
    }
    j["comm"] = comm;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void append_trace_jsonl(const std::filesystem::path& path, const EpisodeTrace& trace, std::size_t episode_index) {
  std::ofstream os(path, std::ios::app);
  if (!os) throw IoError("cannot write trace file " + path.string());
  os << trace_to_jsonl(trace, episode_index);
}

}  // namespace gnncomm
