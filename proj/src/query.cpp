#include "ag/query.hpp"

#include <algorithm>
#include <array>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ag/common.hpp"
#include "ag/prompts.hpp"

namespace ag {

namespace prompts {
std::string substitute(std::string text, const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  while ((pos = text.find(key, pos)) != std::string::npos) {
    text.replace(pos, key.size(), value);
    pos += value.size();
  }
  return text;
}
}  // namespace prompts

const char* to_string(ActionClass a) {
  switch (a) {
    case ActionClass::rotate: return "rotate";
    case ActionClass::key_press: return "key_press";
    case ActionClass::tip_push: return "tip_push";
    case ActionClass::hook_pull: return "hook_pull";
    case ActionClass::pinch_pull: return "pinch_pull";
    case ActionClass::hook_turn: return "hook_turn";
    case ActionClass::foot_push: return "foot_push";
    case ActionClass::plug_in: return "plug_in";
    case ActionClass::unplug: return "unplug";
  }
  return "hook_pull";
}

std::optional<ActionClass> action_from_string(const std::string& token) {
  static const std::array<ActionClass, 9> all = {
      ActionClass::rotate, ActionClass::key_press, ActionClass::tip_push,
      ActionClass::hook_pull, ActionClass::pinch_pull, ActionClass::hook_turn,
      ActionClass::foot_push, ActionClass::plug_in, ActionClass::unplug};
  for (auto a : all)
    if (token == to_string(a)) return a;
  return std::nullopt;
}

const char* to_string(SpatialDescriptor::Direction d) {
  switch (d) {
    case SpatialDescriptor::Direction::top: return "top";
    case SpatialDescriptor::Direction::bottom: return "bottom";
    case SpatialDescriptor::Direction::left: return "left";
    case SpatialDescriptor::Direction::right: return "right";
    case SpatialDescriptor::Direction::front: return "front";
    case SpatialDescriptor::Direction::back: return "back";
  }
  return "top";
}

const char* to_string(SpatialDescriptor::Relation r) {
  switch (r) {
    case SpatialDescriptor::Relation::left_of: return "left_of";
    case SpatialDescriptor::Relation::right_of: return "right_of";
    case SpatialDescriptor::Relation::above: return "above";
    case SpatialDescriptor::Relation::below: return "below";
    case SpatialDescriptor::Relation::next_to: return "next_to";
  }
  return "next_to";
}

namespace {

int ordinal_value(const std::string& word) {
  static const std::array<const char*, 10> words = {
      "first", "second", "third", "fourth", "fifth",
      "sixth", "seventh", "eighth", "ninth", "tenth"};
  static const std::array<const char*, 10> numerals = {
      "1st", "2nd", "3rd", "4th", "5th", "6th", "7th", "8th", "9th", "10th"};
  for (int i = 0; i < 10; ++i)
    if (word == words[static_cast<std::size_t>(i)] || word == numerals[static_cast<std::size_t>(i)])
      return i + 1;
  return 0;
}

std::optional<SpatialDescriptor::Direction> direction_from(const std::string& word) {
  using D = SpatialDescriptor::Direction;
  if (word == "top") return D::top;
  if (word == "bottom") return D::bottom;
  if (word == "left") return D::left;
  if (word == "right") return D::right;
  if (word == "front") return D::front;
  if (word == "back") return D::back;
  return std::nullopt;
}

std::string trim_phrase(std::string s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '.' || s.back() == ',')) s.pop_back();
  return s;
}

}  // namespace

SpatialDescriptor parse_spatial_descriptor(const std::string& text) {
  SpatialDescriptor d;
  const std::string q = lowercase_trim(text);
  if (q.empty() || q == "n/a") return d;

  // "<ordinal> [words] from the <direction>"
  static const std::regex ordinal_re(
      R"((?:^|[^a-z0-9])(first|second|third|fourth|fifth|sixth|seventh|eighth|ninth|tenth|1st|2nd|3rd|4th|5th|6th|7th|8th|9th|10th)(?:\s+[a-z]+){0,3}?\s+from\s+the\s+(top|bottom|left|right|front|back)\b)");
  std::smatch m;
  if (std::regex_search(q, m, ordinal_re)) {
    d.kind = SpatialDescriptor::Kind::ordinal;
    d.ordinal_rank = ordinal_value(m[1].str());
    d.direction = *direction_from(m[2].str());
    return d;
  }

  static const std::regex nearest_re(R"(\bnearest\s+to\s+the\s+([a-z]+(?:\s+[a-z]+)*))");
  if (std::regex_search(q, m, nearest_re)) {
    d.kind = SpatialDescriptor::Kind::nearest;
    d.reference_label = trim_phrase(m[1].str());
    return d;
  }

  static const std::regex relation_re(
      R"(\b(left\s+of|right\s+of|above|below|next\s+to)\s+the\s+([a-z]+(?:\s+[a-z]+)*))");
  if (std::regex_search(q, m, relation_re)) {
    d.kind = SpatialDescriptor::Kind::relation;
    const std::string rel = m[1].str();
    using R = SpatialDescriptor::Relation;
    if (rel.rfind("left", 0) == 0) d.relation = R::left_of;
    else if (rel.rfind("right", 0) == 0) d.relation = R::right_of;
    else if (rel == "above") d.relation = R::above;
    else if (rel == "below") d.relation = R::below;
    else d.relation = R::next_to;
    d.reference_label = trim_phrase(m[2].str());
    return d;
  }

  return d;  // kind none
}

namespace {

const std::vector<std::pair<std::string, ActionClass>>& interaction_vocab() {
  static const std::vector<std::pair<std::string, ActionClass>> vocab = {
      {"handle", ActionClass::hook_pull},  {"knob", ActionClass::rotate},
      {"button", ActionClass::tip_push},   {"switch", ActionClass::key_press},
      {"lever", ActionClass::pinch_pull},  {"pedal", ActionClass::foot_push},
      {"keyhole", ActionClass::hook_turn}, {"socket", ActionClass::plug_in},
      {"port", ActionClass::plug_in},      {"plug", ActionClass::unplug},
      {"valve", ActionClass::rotate},      {"latch", ActionClass::pinch_pull},
  };
  return vocab;
}

const std::vector<std::string>& context_vocab() {
  static const std::vector<std::string> vocab = {
      "drawer", "cabinet", "door", "window", "box",      "desk",       "table",
      "shelf",  "wardrobe", "oven", "fridge", "dresser", "nightstand", "cupboard"};
  return vocab;
}

bool contains_word(const std::string& text, const std::string& word, std::size_t* pos_out = nullptr) {
  std::size_t pos = 0;
  while ((pos = text.find(word, pos)) != std::string::npos) {
    const bool left_ok = pos == 0 || !std::isalnum(static_cast<unsigned char>(text[pos - 1]));
    const std::size_t end = pos + word.size();
    const bool right_ok = end >= text.size() || !std::isalpha(static_cast<unsigned char>(text[end]));
    if (left_ok && right_ok) {
      if (pos_out) *pos_out = pos;
      return true;
    }
    ++pos;
  }
  return false;
}

ParsedQuery parse_heuristic(const std::string& q) {
  ParsedQuery p;
  p.original_prompt = q;
  const std::string text = lowercase_trim(q);

  std::size_t best_pos = std::string::npos;
  for (const auto& [word, action] : interaction_vocab()) {
    std::size_t pos = 0;
    if (contains_word(text, word, &pos) && pos < best_pos) {
      best_pos = pos;
      p.interaction_label = word;
      p.action = action;
    }
  }
  if (p.interaction_label.empty()) {
    // No known interface noun; fall back to the first alphabetic token.
    std::istringstream iss(text);
    std::string tok;
    while (iss >> tok) {
      std::string clean;
      for (char c : tok)
        if (std::isalpha(static_cast<unsigned char>(c))) clean.push_back(c);
      if (clean.size() > 2 && clean != "the" && clean != "and") {
        p.interaction_label = clean;
        break;
      }
    }
    if (p.interaction_label.empty()) p.interaction_label = text;
  }
  p.functional_candidates = {p.interaction_label};

  best_pos = std::string::npos;
  for (const auto& word : context_vocab()) {
    std::size_t pos = 0;
    if (word != p.interaction_label && contains_word(text, word, &pos) && pos < best_pos) {
      best_pos = pos;
      p.context_label = word;
    }
  }

  // Verb cues override the noun default.
  if (contains_word(text, "press")) p.action = ActionClass::tip_push;
  else if (contains_word(text, "unplug")) p.action = ActionClass::unplug;
  else if (contains_word(text, "plug")) p.action = ActionClass::plug_in;
  else if (contains_word(text, "rotate") || contains_word(text, "turn"))
    p.action = p.interaction_label == "keyhole" ? ActionClass::hook_turn : ActionClass::rotate;

  SpatialDescriptor sd = parse_spatial_descriptor(q);
  if (sd.kind != SpatialDescriptor::Kind::none) p.spatial = sd;
  return p;
}

std::string strip_field_prefix(std::string line) {
  // Tolerate "contextual_object: drawer" style responses.
  static const std::array<const char*, 6> names = {
      "contextual_object", "interactive_objects", "functional_object_candidates",
      "action", "spatial_relation", "original_prompt"};
  for (const char* n : names) {
    const std::size_t len = std::string(n).size();
    if (line.size() > len && line.compare(0, len, n) == 0) {
      std::size_t pos = len;
      while (pos < line.size() && (line[pos] == ':' || line[pos] == ' ')) ++pos;
      if (pos > len) return line.substr(pos);
    }
  }
  return line;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!lowercase_trim(cur).empty()) out.push_back(lowercase_trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!lowercase_trim(cur).empty()) out.push_back(lowercase_trim(cur));
  return out;
}

ParsedQuery parse_stage1_response(const std::string& q, const std::string& response) {
  std::vector<std::string> lines;
  std::istringstream iss(response);
  std::string line;
  while (std::getline(iss, line)) {
    std::size_t b = 0, e = line.size();
    while (b < e && std::isspace(static_cast<unsigned char>(line[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(line[e - 1]))) --e;
    if (e > b) lines.push_back(line.substr(b, e - b));
  }
  if (lines.size() < 6) throw ParseError("stage-1 response has fewer than 6 fields");

  ParsedQuery p;
  p.original_prompt = q;

  const std::string ctx = lowercase_trim(strip_field_prefix(lines[0]));
  if (!ctx.empty() && ctx != "none" && ctx != "n/a") p.context_label = ctx;

  auto interactive = split_csv(strip_field_prefix(lines[1]));
  if (interactive.empty()) throw ParseError("stage-1 response: empty interactive_objects");
  p.interaction_label = interactive.front();
  for (std::size_t i = 1; i < interactive.size(); ++i)
    p.functional_candidates.push_back(interactive[i]);
  for (const auto& c : split_csv(strip_field_prefix(lines[2])))
    p.functional_candidates.push_back(c);

  std::string action_tok = lowercase_trim(strip_field_prefix(lines[3]));
  // strip brackets a model might echo from the enumeration
  std::erase(action_tok, '[');
  std::erase(action_tok, ']');
  auto action = action_from_string(action_tok);
  if (!action) throw ParseError("stage-1 response: unknown action token \"" + action_tok + "\"");
  p.action = *action;

  const std::string spatial_line = strip_field_prefix(lines[4]);
  SpatialDescriptor sd = parse_spatial_descriptor(q);
  if (sd.kind == SpatialDescriptor::Kind::none) {
    // The backend may still report an explicit [X, Y] relation pair.
    static const std::regex pair_re(R"(\[\s*([^,\]]+)\s*,\s*([^\]]+?)\s*\])");
    std::smatch m;
    if (std::regex_search(spatial_line, m, pair_re)) {
      sd.kind = SpatialDescriptor::Kind::relation;
      sd.relation = SpatialDescriptor::Relation::next_to;
      sd.reference_label = lowercase_trim(m[2].str());
    }
  }
  if (sd.kind != SpatialDescriptor::Kind::none) p.spatial = sd;
  return p;
}

}  // namespace

ParsedQuery parse_query(const std::string& q, ChatClient* backend) {
  if (q.empty()) throw ContractViolation("parse_query: empty query");
  if (!backend) return parse_heuristic(q);

  std::string last_response;
  std::string last_error;
  for (int attempt = 0; attempt < 3; ++attempt) {  // initial try + 2 retries
    last_response = backend->complete({{"system", prompts::kStage1QueryParsing, {}},
                                       {"user", q, {}}});
    try {
      return parse_stage1_response(q, last_response);
    } catch (const ParseError& e) {
      last_error = e.what();
    }
  }
  throw ParseError("stage-1 parsing failed after 2 retries: " + last_error +
                   "; raw response: " + last_response);
}

std::string parsed_query_to_json(const ParsedQuery& p) {
  nlohmann::ordered_json doc;
  doc["context_label"] = p.context_label ? nlohmann::ordered_json(*p.context_label)
                                         : nlohmann::ordered_json(nullptr);
  doc["interaction_label"] = p.interaction_label;
  doc["functional_candidates"] = p.functional_candidates;
  doc["action"] = to_string(p.action);
  if (p.spatial) {
    nlohmann::ordered_json sd;
    switch (p.spatial->kind) {
      case SpatialDescriptor::Kind::ordinal:
        sd["kind"] = "ordinal";
        sd["rank"] = p.spatial->ordinal_rank;
        sd["direction"] = to_string(p.spatial->direction);
        break;
      case SpatialDescriptor::Kind::relation:
        sd["kind"] = "relation";
        sd["relation"] = to_string(p.spatial->relation);
        sd["reference"] = p.spatial->reference_label;
        break;
      case SpatialDescriptor::Kind::nearest:
        sd["kind"] = "nearest";
        sd["reference"] = p.spatial->reference_label;
        break;
      case SpatialDescriptor::Kind::none:
        sd["kind"] = "none";
        break;
    }
    doc["spatial"] = std::move(sd);
  } else {
    doc["spatial"] = nullptr;
  }
  doc["original_prompt"] = p.original_prompt;
  return doc.dump(2) + "\n";
}

ParsedQuery parsed_query_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("parsed query JSON error: " + std::string(e.what()), e.byte);
  }
  ParsedQuery p;
  if (!doc.at("context_label").is_null())
    p.context_label = doc.at("context_label").get<std::string>();
  p.interaction_label = doc.at("interaction_label").get<std::string>();
  p.functional_candidates = doc.at("functional_candidates").get<std::vector<std::string>>();
  auto action = action_from_string(doc.at("action").get<std::string>());
  if (!action) throw ParseError("parsed query JSON: unknown action");
  p.action = *action;
  if (!doc.at("spatial").is_null()) {
    SpatialDescriptor sd;
    const std::string kind = doc.at("spatial").at("kind").get<std::string>();
    if (kind == "ordinal") {
      sd.kind = SpatialDescriptor::Kind::ordinal;
      sd.ordinal_rank = doc.at("spatial").at("rank").get<int>();
      const std::string dir = doc.at("spatial").at("direction").get<std::string>();
      using D = SpatialDescriptor::Direction;
      for (D d : {D::top, D::bottom, D::left, D::right, D::front, D::back})
        if (dir == to_string(d)) sd.direction = d;
    } else if (kind == "relation") {
      sd.kind = SpatialDescriptor::Kind::relation;
      const std::string rel = doc.at("spatial").at("relation").get<std::string>();
      using R = SpatialDescriptor::Relation;
      for (R r : {R::left_of, R::right_of, R::above, R::below, R::next_to})
        if (rel == to_string(r)) sd.relation = r;
      sd.reference_label = doc.at("spatial").at("reference").get<std::string>();
    } else if (kind == "nearest") {
      sd.kind = SpatialDescriptor::Kind::nearest;
      sd.reference_label = doc.at("spatial").at("reference").get<std::string>();
    }
    if (sd.kind != SpatialDescriptor::Kind::none) p.spatial = sd;
  }
  p.original_prompt = doc.at("original_prompt").get<std::string>();
  return p;
}

}  // namespace ag
