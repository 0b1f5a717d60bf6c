#include "termstat/corpus.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <unordered_map>

#include "termstat/error.hpp"

namespace termstat {

std::string_view to_string(Speaker speaker) {
  return speaker == Speaker::patient ? "patient" : "doctor";
}

Speaker parse_speaker(std::string_view text) {
  if (text == "patient") return Speaker::patient;
  if (text == "doctor") return Speaker::doctor;
  throw ParseError("unknown speaker \"" + std::string(text) + "\"");
}

std::string to_string(const WindowKey& key) {
  return key.dialogue_id + "#" + std::to_string(key.end_turn);
}

std::string normalize_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

namespace {

std::string where(const std::string& id, std::size_t line) {
  return "dialogue \"" + id + "\" (line " + std::to_string(line) + ")";
}

const Json& require(const Json& record, const char* field, std::size_t line) {
  if (!record.is_object() || !record.contains(field))
    throw ParseError(std::string("missing field \"") + field + "\"", line);
  return record.at(field);
}

std::string require_string(const Json& record, const char* field, std::size_t line) {
  const Json& v = require(record, field, line);
  if (!v.is_string()) throw ParseError(std::string("field \"") + field + "\" must be a string", line);
  return v.get<std::string>();
}

std::size_t require_index(const Json& record, const char* field, std::size_t line) {
  const Json& v = require(record, field, line);
  if (!v.is_number_unsigned())
    throw ParseError(std::string("field \"") + field + "\" must be a non-negative integer", line);
  return v.get<std::size_t>();
}

std::vector<Turn> parse_turns(const Json& record, const std::string& id, std::size_t line) {
  const Json& turns = require(record, "turns", line);
  if (!turns.is_array()) throw ParseError("field \"turns\" must be a list", line);
  std::vector<Turn> out;
  out.reserve(turns.size());
  for (const auto& t : turns) {
    Turn turn;
    try {
      turn.speaker = parse_speaker(require_string(t, "speaker", line));
    } catch (const ParseError& e) {
      throw ParseError(std::string(e.what()) + " in " + where(id, line), line);
    }
    turn.text = normalize_whitespace(require_string(t, "text", line));
    if (turn.text.empty())
      throw IngestionError(where(id, line) + ": turn " + std::to_string(out.size()) +
                           " has empty text");
    turn.index = out.size();
    out.push_back(std::move(turn));
  }
  return out;
}

// Latest-status reduction restricted to a window, ordered by first mention
// (turn), ties broken by schema order.
std::vector<TermStatusPair> window_gold(const Dialogue& dialogue, const Schema& schema,
                                        std::size_t first, std::size_t last) {
  std::unordered_map<std::string, std::size_t> first_turn;
  for (const auto& ev : dialogue.events)
    if (ev.turn >= first && ev.turn <= last) first_turn.try_emplace(ev.term, ev.turn);
  const auto span_events = events_in_span(dialogue, first, last);
  std::vector<TermStatusPair> gold = dedup_pairs(reduce_latest_status(span_events));
  std::stable_sort(gold.begin(), gold.end(),
                   [&](const TermStatusPair& a, const TermStatusPair& b) {
                     const auto ta = first_turn.at(a.term), tb = first_turn.at(b.term);
                     if (ta != tb) return ta < tb;
                     return schema.term_rank(a.term) < schema.term_rank(b.term);
                   });
  return gold;
}

}  // namespace

std::vector<Dialogue> ingest_dialogues(std::istream& in, const Schema& schema) {
  std::vector<Dialogue> out;
  for_each_jsonl(in, [&](const Json& record, std::size_t line) {
    Dialogue d;
    d.id = require_string(record, "id", line);
    d.turns = parse_turns(record, d.id, line);
    if (record.contains("annotations")) {
      const Json& anns = record.at("annotations");
      if (!anns.is_array()) throw ParseError("field \"annotations\" must be a list", line);
      for (const auto& a : anns) {
        AnnotationEvent ev;
        ev.turn = require_index(a, "turn", line);
        ev.term = require_string(a, "term", line);
        ev.status = require_string(a, "status", line);
        const std::string ctx = where(d.id, line) + ", turn " + std::to_string(ev.turn);
        if (ev.turn >= d.turns.size())
          throw IngestionError(ctx + ": annotation refers to a missing turn");
        if (!schema.has_term(ev.term))
          throw IngestionError(ctx + ": unknown term \"" + ev.term + "\"");
        const auto cands = schema.status_candidates(ev.term, false);
        if (std::find(cands.begin(), cands.end(), ev.status) == cands.end())
          throw IngestionError(ctx + ": status \"" + ev.status + "\" is not a candidate for \"" +
                               ev.term + "\"");
        d.events.push_back(std::move(ev));
      }
      std::stable_sort(d.events.begin(), d.events.end(),
                       [](const auto& a, const auto& b) { return a.turn < b.turn; });
    }
    out.push_back(std::move(d));
  });
  return out;
}

std::vector<Dialogue> ingest_dialogues_file(const std::filesystem::path& path,
                                            const Schema& schema) {
  auto in = open_input(path);
  try {
    return ingest_dialogues(in, schema);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const IngestionError& e) {
    throw IngestionError(path.string() + ": " + e.what());
  }
}

Json dialogue_to_json(const Dialogue& dialogue) {
  Json turns = Json::array();
  for (const auto& t : dialogue.turns)
    turns.push_back({{"speaker", to_string(t.speaker)}, {"text", t.text}});
  Json anns = Json::array();
  for (const auto& e : dialogue.events)
    anns.push_back({{"turn", e.turn}, {"term", e.term}, {"status", e.status}});
  return {{"id", dialogue.id}, {"turns", std::move(turns)}, {"annotations", std::move(anns)}};
}

Dialogue merge_adjacent_turns(const Dialogue& dialogue) {
  Dialogue out;
  out.id = dialogue.id;
  std::vector<std::size_t> remap(dialogue.turns.size());
  for (std::size_t i = 0; i < dialogue.turns.size(); ++i) {
    const Turn& t = dialogue.turns[i];
    if (!out.turns.empty() && out.turns.back().speaker == t.speaker) {
      out.turns.back().text += ' ';
      out.turns.back().text += t.text;
    } else {
      out.turns.push_back({t.speaker, t.text, out.turns.size()});
    }
    remap[i] = out.turns.size() - 1;
  }
  out.events.reserve(dialogue.events.size());
  for (const auto& ev : dialogue.events) out.events.push_back({remap.at(ev.turn), ev.term, ev.status});
  return out;
}

std::vector<Window> windowize(const Dialogue& dialogue, const Schema& schema,
                              std::size_t window_size) {
  if (window_size == 0) throw ConfigError("window size must be positive");
  std::vector<Window> out;
  out.reserve(dialogue.turns.size());
  for (std::size_t k = 0; k < dialogue.turns.size(); ++k) {
    const std::size_t first = k + 1 >= window_size ? k + 1 - window_size : 0;
    Window w;
    w.dialogue_id = dialogue.id;
    w.end_turn = k;
    w.turns.assign(dialogue.turns.begin() + static_cast<std::ptrdiff_t>(first),
                   dialogue.turns.begin() + static_cast<std::ptrdiff_t>(k) + 1);
    w.gold = window_gold(dialogue, schema, first, k);
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<TermStatusPair> reduce_latest_status(std::span<const TermStatusPair> events) {
  std::vector<TermStatusPair> out;
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& ev : events) {
    auto [it, inserted] = slot.try_emplace(ev.term, out.size());
    if (inserted)
      out.push_back(ev);
    else
      out[it->second].status = ev.status;
  }
  return out;
}

std::vector<TermStatusPair> dedup_pairs(std::span<const TermStatusPair> pairs) {
  std::vector<TermStatusPair> out;
  std::set<TermStatusPair> seen;
  for (const auto& p : pairs)
    if (seen.insert(p).second) out.push_back(p);
  return out;
}

std::vector<TermStatusPair> events_in_span(const Dialogue& dialogue, std::size_t first_turn,
                                           std::size_t last_turn) {
  std::vector<TermStatusPair> out;
  for (const auto& ev : dialogue.events)
    if (ev.turn >= first_turn && ev.turn <= last_turn) out.push_back({ev.term, ev.status});
  return out;
}

std::vector<TermStatusPair> dialogue_gold(const Dialogue& dialogue) {
  if (dialogue.events.empty()) return {};
  return reduce_latest_status(events_in_span(dialogue, 0, dialogue.events.back().turn));
}

std::vector<Window> prepare_windows(std::span<const Dialogue> dialogues, const Schema& schema,
                                    std::size_t window_size) {
  std::vector<Window> out;
  for (const auto& d : dialogues) {
    auto windows = windowize(merge_adjacent_turns(d), schema, window_size);
    std::move(windows.begin(), windows.end(), std::back_inserter(out));
  }
  return out;
}

Json window_to_json(const Window& window) {
  Json turns = Json::array();
  for (const auto& t : window.turns)
    turns.push_back({{"index", t.index}, {"speaker", to_string(t.speaker)}, {"text", t.text}});
  Json record = {{"dialogue_id", window.dialogue_id},
                 {"end_turn", window.end_turn},
                 {"turns", std::move(turns)}};
  if (window.gold) {
    Json gold = Json::array();
    for (const auto& p : *window.gold) gold.push_back({{"term", p.term}, {"status", p.status}});
    record["gold"] = std::move(gold);
  } else {
    record["gold"] = nullptr;
  }
  return record;
}

Window window_from_json(const Json& record) {
  Window w;
  w.dialogue_id = record.at("dialogue_id").get<std::string>();
  w.end_turn = record.at("end_turn").get<std::size_t>();
  for (const auto& t : record.at("turns"))
    w.turns.push_back({parse_speaker(t.at("speaker").get<std::string>()),
                       t.at("text").get<std::string>(), t.at("index").get<std::size_t>()});
  if (record.contains("gold") && !record.at("gold").is_null()) {
    std::vector<TermStatusPair> gold;
    for (const auto& p : record.at("gold"))
      gold.push_back({p.at("term").get<std::string>(), p.at("status").get<std::string>()});
    w.gold = std::move(gold);
  }
  return w;
}

void write_windows(std::ostream& out, std::span<const Window> windows) {
  for (const auto& w : windows) out << window_to_json(w).dump() << '\n';
}

std::vector<Window> read_windows(std::istream& in) {
  std::vector<Window> out;
  for_each_jsonl(in, [&](const Json& record, std::size_t line) {
    try {
      out.push_back(window_from_json(record));
    } catch (const Json::exception& e) {
      throw ParseError(std::string("malformed window record: ") + e.what(), line);
    }
  });
  return out;
}

std::vector<TermOnlyRecord> ingest_term_only(std::istream& in, const Schema& schema,
                                             std::size_t window_size) {
  if (window_size == 0) throw ConfigError("window size must be positive");
  std::vector<TermOnlyRecord> out;
  const std::string& sep = schema.separator();
  for_each_jsonl(in, [&](const Json& record, std::size_t line) {
    Dialogue raw;
    raw.id = require_string(record, "id", line);
    raw.turns = parse_turns(record, raw.id, line);
    if (record.contains("annotations")) {
      for (const auto& a : record.at("annotations")) {
        AnnotationEvent ev;
        ev.turn = require_index(a, "turn", line);
        ev.term = normalize_whitespace(require_string(a, "term", line));
        if (a.contains("status"))
          throw IngestionError(where(raw.id, line) + ": term-only record carries a status");
        if (ev.turn >= raw.turns.size())
          throw IngestionError(where(raw.id, line) + ": annotation refers to a missing turn");
        if (ev.term.empty() || ev.term.find(sep) != std::string::npos ||
            ev.term.find(schema.sentinels().begin) != std::string::npos ||
            ev.term.find(schema.sentinels().end) != std::string::npos)
          throw IngestionError(where(raw.id, line) + ": term \"" + ev.term +
                               "\" is empty or contains a reserved string");
        raw.events.push_back(std::move(ev));
      }
      std::stable_sort(raw.events.begin(), raw.events.end(),
                       [](const auto& a, const auto& b) { return a.turn < b.turn; });
    }
    const Dialogue merged = merge_adjacent_turns(raw);
    for (std::size_t k = 0; k < merged.turns.size(); ++k) {
      const std::size_t first = k + 1 >= window_size ? k + 1 - window_size : 0;
      TermOnlyRecord rec;
      rec.source_id = merged.id;
      rec.end_turn = k;
      rec.turns.assign(merged.turns.begin() + static_cast<std::ptrdiff_t>(first),
                       merged.turns.begin() + static_cast<std::ptrdiff_t>(k) + 1);
      std::set<std::string_view> seen;
      for (const auto& ev : merged.events)
        if (ev.turn >= first && ev.turn <= k && seen.insert(ev.term).second)
          rec.terms.push_back(ev.term);
      out.push_back(std::move(rec));
    }
  });
  return out;
}

}  // namespace termstat
