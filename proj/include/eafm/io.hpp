#pragma once

// OpenEA-style tab-separated dataset files and id dictionaries.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "eafm/error.hpp"
#include "eafm/kg.hpp"
#include "eafm/rng.hpp"

namespace eafm {

namespace fs = std::filesystem;

// Opaque string identifier <-> dense id, in first-occurrence order.
class Dictionary {
 public:
  std::int32_t intern(const std::string& name) {
    auto [it, inserted] = ids_.try_emplace(name, static_cast<std::int32_t>(names_.size()));
    if (inserted) names_.push_back(name);
    return it->second;
  }
  std::optional<std::int32_t> find(const std::string& name) const {
    auto it = ids_.find(name);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }
  const std::string& name(std::int32_t id) const { return names_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::unordered_map<std::string, std::int32_t> ids_;
  std::vector<std::string> names_;
};

struct DatasetManifest {
  fs::path triples_first;
  fs::path triples_second;
  std::optional<fs::path> links;
  std::optional<fs::path> train_links;
  std::optional<fs::path> valid_links;
  std::optional<fs::path> test_links;
  std::uint64_t split_seed = 0;

  bool presplit() const { return train_links && valid_links && test_links; }

  // Default OpenEA names in `dir`. Split files are looked up in `dir` and
  // then in `dir/721_5fold/1`.
  static DatasetManifest from_directory(const fs::path& dir, std::uint64_t split_seed = 0) {
    if (!fs::is_directory(dir)) throw DataError("dataset directory not found: " + dir.string());
    DatasetManifest m;
    m.triples_first = dir / "rel_triples_1";
    m.triples_second = dir / "rel_triples_2";
    m.split_seed = split_seed;
    if (fs::exists(dir / "ent_links")) m.links = dir / "ent_links";
    for (const fs::path& base : {dir, dir / "721_5fold" / "1"}) {
      if (fs::exists(base / "train_links") && fs::exists(base / "valid_links") &&
          fs::exists(base / "test_links")) {
        m.train_links = base / "train_links";
        m.valid_links = base / "valid_links";
        m.test_links = base / "test_links";
        break;
      }
    }
    if (!m.links && !m.presplit()) {
      throw DataError("dataset directory " + dir.string() + " has neither ent_links nor split link files");
    }
    return m;
  }
};

struct LoadedTask {
  AlignmentTask task;
  Dictionary entities_first;
  Dictionary entities_second;
  Dictionary relations_first;
  Dictionary relations_second;
};

namespace detail {

// Calls fn(fields, line_number) for every non-blank line.
template <class Fn>
void read_tsv(const fs::path& path, std::size_t expected_fields, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> fields;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    fields.clear();
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    bool empty_field = false;
    for (const auto& f : fields) empty_field |= f.empty();
    if (fields.size() != expected_fields || empty_field) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(expected_fields) + " tab-separated fields");
    }
    fn(fields, line_no);
  }
}

inline std::vector<std::array<std::int32_t, 3>> read_triples(const fs::path& path, Dictionary& ents,
                                                             Dictionary& rels) {
  std::vector<std::array<std::int32_t, 3>> out;
  read_tsv(path, 3, [&](const std::vector<std::string>& f, std::size_t) {
    const auto h = ents.intern(f[0]);
    const auto r = rels.intern(f[1]);
    const auto t = ents.intern(f[2]);
    out.push_back({h, r, t});
  });
  return out;
}

inline SeedAlignment read_links(const fs::path& path, Dictionary& first, Dictionary& second) {
  SeedAlignment s;
  read_tsv(path, 2, [&](const std::vector<std::string>& f, std::size_t) {
    s.pairs.emplace_back(first.intern(f[0]), second.intern(f[1]));
  });
  return s;
}

}  // namespace detail

// Splits links 20/10/70 after a seeded shuffle; at least one train pair.
inline void draw_default_split(std::vector<AlignedPair> pairs, std::uint64_t seed, AlignmentTask& task) {
  Rng rng(seed);
  rng.shuffle(pairs);
  const std::size_t n = pairs.size();
  std::size_t n_train = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, n > 0 ? 1 : 0, n);
  const std::size_t n_valid =
      std::min(n - n_train, static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n))));
  task.train.pairs.assign(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(n_train));
  task.valid.pairs.assign(pairs.begin() + static_cast<std::ptrdiff_t>(n_train),
                          pairs.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
  task.test.pairs.assign(pairs.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid), pairs.end());
}

inline LoadedTask load_task(const DatasetManifest& m) {
  LoadedTask out;
  const auto raw1 = detail::read_triples(m.triples_first, out.entities_first, out.relations_first);
  const auto raw2 = detail::read_triples(m.triples_second, out.entities_second, out.relations_second);

  std::vector<SeedAlignment> splits;
  if (m.presplit()) {
    for (const auto& p : {*m.train_links, *m.valid_links, *m.test_links}) {
      splits.push_back(detail::read_links(p, out.entities_first, out.entities_second));
    }
  } else {
    splits.push_back(detail::read_links(*m.links, out.entities_first, out.entities_second));
  }

  auto to_triples = [](const std::vector<std::array<std::int32_t, 3>>& raw) {
    std::vector<Triple> t;
    t.reserve(raw.size());
    for (const auto& a : raw) t.push_back({a[0], a[1], a[2]});
    return t;
  };
  out.task.g1 = KnowledgeGraph::build(to_triples(raw1), out.entities_first.size(), out.relations_first.size());
  out.task.g2 = KnowledgeGraph::build(to_triples(raw2), out.entities_second.size(), out.relations_second.size());

  if (m.presplit()) {
    out.task.train = std::move(splits[0]);
    out.task.valid = std::move(splits[1]);
    out.task.test = std::move(splits[2]);
  } else {
    splits[0].validate(out.task.g1, out.task.g2, m.links->string());
    draw_default_split(std::move(splits[0].pairs), m.split_seed, out.task);
  }
  out.task.validate();
  return out;
}

inline LoadedTask load_task(const fs::path& dir, std::uint64_t split_seed = 0) {
  return load_task(DatasetManifest::from_directory(dir, split_seed));
}

// Names entities/relations of an in-memory task as `<prefix>e<id>` and
// `<prefix>r<id>`, so it can be written out.
inline LoadedTask with_default_names(AlignmentTask task, const std::string& prefix1 = "kg1/",
                                     const std::string& prefix2 = "kg2/") {
  LoadedTask out;
  for (std::size_t i = 0; i < task.g1.num_entities(); ++i) out.entities_first.intern(prefix1 + "e" + std::to_string(i));
  for (std::size_t i = 0; i < task.g2.num_entities(); ++i) out.entities_second.intern(prefix2 + "e" + std::to_string(i));
  for (std::size_t i = 0; i < task.g1.num_original_relations(); ++i) out.relations_first.intern(prefix1 + "r" + std::to_string(i));
  for (std::size_t i = 0; i < task.g2.num_original_relations(); ++i) out.relations_second.intern(prefix2 + "r" + std::to_string(i));
  out.task = std::move(task);
  return out;
}

inline void write_dictionary(const fs::path& path, const Dictionary& d) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  for (std::size_t i = 0; i < d.size(); ++i) os << i << '\t' << d.names()[i] << '\n';
}

// Task dump: triples, all links, explicit splits and the id dictionaries.
inline void write_task(const fs::path& dir, const LoadedTask& t) {
  fs::create_directories(dir);
  auto triples = [&](const fs::path& p, const KnowledgeGraph& g, const Dictionary& ents, const Dictionary& rels) {
    std::ofstream os(p);
    if (!os) throw DataError("cannot write " + p.string());
    for (const Triple& tr : g.original_triples()) {
      os << ents.name(tr.head) << '\t' << rels.name(tr.rel) << '\t' << ents.name(tr.tail) << '\n';
    }
  };
  triples(dir / "rel_triples_1", t.task.g1, t.entities_first, t.relations_first);
  triples(dir / "rel_triples_2", t.task.g2, t.entities_second, t.relations_second);
  auto links = [&](const fs::path& p, std::initializer_list<const SeedAlignment*> sets) {
    std::ofstream os(p);
    if (!os) throw DataError("cannot write " + p.string());
    for (const SeedAlignment* s : sets) {
      for (const auto& [u, v] : s->pairs) os << t.entities_first.name(u) << '\t' << t.entities_second.name(v) << '\n';
    }
  };
  links(dir / "ent_links", {&t.task.train, &t.task.valid, &t.task.test});
  links(dir / "train_links", {&t.task.train});
  links(dir / "valid_links", {&t.task.valid});
  links(dir / "test_links", {&t.task.test});
  write_dictionary(dir / "ent_ids_1", t.entities_first);
  write_dictionary(dir / "ent_ids_2", t.entities_second);
  write_dictionary(dir / "rel_ids_1", t.relations_first);
  write_dictionary(dir / "rel_ids_2", t.relations_second);
}

}  // namespace eafm
