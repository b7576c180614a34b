#include "seta/experts.hpp"

#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

#include "seta/errors.hpp"

namespace seta {

std::string ExpertRecord::label() const {
  return kind == ExpertKind::Shared ? std::string("S") : fmt::format("U{}", task_id);
}

ExpertRecord& Registry::append(ExpertKind kind, int task_id) {
  if (kind == ExpertKind::Shared && shared() != nullptr)
    throw RegistryError("registry already holds a shared expert");
  ExpertRecord& e = experts_.emplace_back();
  e.id = static_cast<ExpertId>(experts_.size() - 1);
  e.kind = kind;
  e.task_id = kind == ExpertKind::Shared ? 0 : task_id;
  return e;
}

ExpertRecord& Registry::at(ExpertId id) {
  if (id < 0 || std::size_t(id) >= experts_.size()) throw RegistryError(fmt::format("unknown expert {}", id));
  return experts_[std::size_t(id)];
}

const ExpertRecord& Registry::at(ExpertId id) const {
  if (id < 0 || std::size_t(id) >= experts_.size()) throw RegistryError(fmt::format("unknown expert {}", id));
  return experts_[std::size_t(id)];
}

ExpertRecord* Registry::shared() {
  for (auto& e : experts_)
    if (e.kind == ExpertKind::Shared) return &e;
  return nullptr;
}

const ExpertRecord* Registry::shared() const {
  for (const auto& e : experts_)
    if (e.kind == ExpertKind::Shared) return &e;
  return nullptr;
}

std::vector<ExpertId> Registry::live_ids() const {
  std::vector<ExpertId> out;
  for (const auto& e : experts_)
    if (!e.retired) out.push_back(e.id);
  return out;
}

IndexSet Registry::owned_union() const {
  IndexSet out;
  for (const auto& e : experts_) out |= e.owned;
  return out;
}

int Registry::last_task() const {
  return task_selections.empty() ? 0 : task_selections.rbegin()->first;
}

void Registry::check_invariants() const {
  IndexSet seen;
  for (const auto& e : experts_) {
    if (e.retired && !e.owned.empty())
      throw IntegrityError(fmt::format("retired expert {} still owns blocks", e.id));
    if (e.deltas.coords() != e.owned)
      throw IntegrityError(fmt::format("expert {} deltas do not match its owned set", e.id));
    for (const auto& b : e.owned) {
      if (!seen.insert(b))
        throw IntegrityError(fmt::format("block {} owned twice (expert {})", to_string(b), e.id));
    }
    if (e.kind == ExpertKind::Unique) {
      if (!e.anchors.empty() || !e.share_count.empty())
        throw IntegrityError(fmt::format("unique expert {} carries anchors", e.id));
    } else {
      if (e.frozen) throw IntegrityError("shared expert is frozen");
      for (const auto& b : e.owned) {
        auto n = e.share_count.find(b);
        if (!e.anchors.count(b) || n == e.share_count.end() || n->second < 2)
          throw IntegrityError("shared block " + to_string(b) + " lacks an anchor or has n_j < 2");
      }
      if (e.anchors.size() != e.owned.size() || e.share_count.size() != e.owned.size())
        throw IntegrityError("shared expert has anchors for blocks it does not own");
    }
  }
  IndexSet selected;
  for (const auto& [t, s] : task_selections) selected |= s;
  if (selected != seen)
    throw IntegrityError(fmt::format("owned union ({} blocks) differs from selection union ({})",
                                     seen.size(), selected.size()));
}

ExpertId init_first_task(Registry& reg, const IndexSet& p1, const Grid& grid) {
  if (!reg.empty()) throw StateError("init_first_task on a non-empty registry");
  ExpertRecord& e = reg.append(ExpertKind::Unique, 1);
  e.owned = p1;
  e.deltas = DeltaOverlay::zeros(grid, p1);
  reg.task_selections[1] = p1;
  return e.id;
}

void freeze_history(Registry& reg, int current_task) {
  for (ExpertId id : reg.live_ids()) {
    ExpertRecord& e = reg.at(id);
    if (e.kind == ExpertKind::Unique && e.task_id < current_task) e.frozen = true;
  }
}

void bump_share_counts(ExpertRecord& shared, const IndexSet& newly_intersected) {
  if (shared.kind != ExpertKind::Shared) throw OwnershipError("share counts live on the shared expert");
  for (const auto& b : newly_intersected)
    if (!shared.owned.contains(b)) throw OwnershipError("shared expert does not own " + to_string(b));
  for (const auto& b : newly_intersected) {
    auto [it, fresh] = shared.share_count.emplace(b, 2);
    if (!fresh) ++it->second;
  }
}

void set_anchors(ExpertRecord& shared) {
  shared.anchors.clear();
  for (const auto& [b, m] : shared.deltas) shared.anchors.emplace(b, m);
}

double anchoring_penalty(const ExpertRecord& shared, double lambda) {
  double s = 0.0;
  for (const auto& [b, m] : shared.deltas) {
    auto a = shared.anchors.find(b);
    auto n = shared.share_count.find(b);
    if (a == shared.anchors.end() || n == shared.share_count.end())
      throw IntegrityError("shared block " + to_string(b) + " has no anchor");
    s += double(n->second) * (m - a->second).squaredNorm();
  }
  return lambda * s;
}

CapacityRow capacity_snapshot(const Registry& reg, int step) {
  CapacityRow row;
  row.step = step;
  row.task_added = reg.last_task();
  row.unique.assign(std::size_t(std::max(0, reg.last_task())), 0);
  for (const auto& e : reg.experts()) {
    const long n = long(e.owned.size());
    if (e.kind == ExpertKind::Shared) {
      row.shared += n;
    } else if (n > 0) {
      if (e.task_id < 1) throw IntegrityError("unique expert without a task");
      if (std::size_t(e.task_id) > row.unique.size()) row.unique.resize(std::size_t(e.task_id), 0);
      row.unique[std::size_t(e.task_id) - 1] += n;
    }
  }
  row.total = row.shared + row.unique_sum();
  return row;
}

std::string serialize_deltas(const ExpertRecord& e) {
  std::string out;
  for (const auto& [b, m] : e.deltas) out += encode_f64(m);
  return out;
}

namespace {

using nlohmann::json;

json coords_json(const IndexSet& s) {
  json a = json::array();
  for (const auto& b : s) a.push_back({b.layer, b.row, b.col});
  return a;
}

IndexSet coords_from(const json& a) {
  IndexSet s;
  for (const auto& c : a) s.insert({c.at(0).get<int>(), c.at(1).get<int>(), c.at(2).get<int>()});
  return s;
}

std::string concat(const std::map<BlockCoord, Matrix>& blocks) {
  std::string out;
  for (const auto& kv : blocks) out += encode_f64(kv.second);
  return out;
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw ArtifactError("cannot write " + p.string());
  os.write(bytes.data(), std::streamsize(bytes.size()));
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw ArtifactError("missing file " + p.string());
  return std::string(std::istreambuf_iterator<char>(is), {});
}

// Splits a concatenated array back into grid-shaped blocks.
std::map<BlockCoord, Matrix> split_blocks(const std::string& bytes, const IndexSet& coords,
                                          const Grid& grid) {
  std::map<BlockCoord, Matrix> out;
  std::size_t pos = 0;
  for (const auto& b : coords) {
    const auto e = grid.extent(b);
    const std::size_t n = std::size_t(e.size()) * 8;
    if (pos + n > bytes.size()) throw ParseError("delta array shorter than its block list");
    out.emplace(b, decode_f64(std::string_view(bytes).substr(pos, n), e.rows, e.cols));
    pos += n;
  }
  if (pos != bytes.size()) throw ParseError("delta array longer than its block list");
  return out;
}

}  // namespace

void save_registry(const Registry& reg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json j;
  j["format"] = "seta-registry";
  j["version"] = 1;
  j["experts"] = json::array();
  for (const auto& e : reg.experts()) {
    json x;
    x["id"] = e.id;
    x["kind"] = e.kind == ExpertKind::Shared ? "shared" : "unique";
    x["task"] = e.task_id;
    x["frozen"] = e.frozen;
    x["retired"] = e.retired;
    x["blocks"] = coords_json(e.owned);
    x["deltas"] = fmt::format("expert_{}.f64", e.id);
    write_bytes(dir / x["deltas"].get<std::string>(), serialize_deltas(e));
    if (e.kind == ExpertKind::Shared) {
      x["anchors"] = fmt::format("expert_{}.anchor.f64", e.id);
      write_bytes(dir / x["anchors"].get<std::string>(), concat(e.anchors));
      json counts = json::array();
      for (const auto& [b, n] : e.share_count) counts.push_back({b.layer, b.row, b.col, n});
      x["share_count"] = counts;
    }
    j["experts"].push_back(x);
  }
  json sel = json::object();
  for (const auto& [t, s] : reg.task_selections) sel[std::to_string(t)] = coords_json(s);
  j["task_selections"] = sel;
  std::ofstream(dir / "manifest.json") << j.dump(2) << "\n";
}

Registry load_registry(const std::filesystem::path& dir, const Grid& grid) {
  json j;
  try {
    j = json::parse(read_bytes(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw ParseError(std::string("registry manifest: ") + e.what());
  }
  Registry reg;
  for (const auto& x : j.at("experts")) {
    const bool is_shared = x.at("kind").get<std::string>() == "shared";
    ExpertRecord& e = reg.append(is_shared ? ExpertKind::Shared : ExpertKind::Unique,
                                 x.at("task").get<int>());
    if (e.id != x.at("id").get<int>()) throw ParseError("registry ids are not contiguous");
    e.frozen = x.at("frozen").get<bool>();
    e.retired = x.at("retired").get<bool>();
    e.owned = coords_from(x.at("blocks"));
    for (auto& [b, m] : split_blocks(read_bytes(dir / x.at("deltas").get<std::string>()), e.owned, grid))
      e.deltas.set(b, std::move(m));
    if (is_shared) {
      e.anchors = split_blocks(read_bytes(dir / x.at("anchors").get<std::string>()), e.owned, grid);
      for (const auto& c : x.at("share_count"))
        e.share_count[{c.at(0).get<int>(), c.at(1).get<int>(), c.at(2).get<int>()}] = c.at(3).get<int>();
    }
  }
  for (const auto& [t, s] : j.at("task_selections").items()) reg.task_selections[std::stoi(t)] = coords_from(s);
  return reg;
}

}  // namespace seta
