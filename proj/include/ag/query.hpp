#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ag/chat.hpp"

namespace ag {

enum class ActionClass {
  rotate, key_press, tip_push, hook_pull, pinch_pull, hook_turn, foot_push, plug_in, unplug
};

const char* to_string(ActionClass a);
std::optional<ActionClass> action_from_string(const std::string& token);

struct SpatialDescriptor {
  enum class Kind { ordinal, relation, nearest, none };
  enum class Direction { top, bottom, left, right, front, back };
  enum class Relation { left_of, right_of, above, below, next_to };

  Kind kind = Kind::none;
  int ordinal_rank = 0;            // ordinal only, >= 1
  Direction direction = Direction::top;
  Relation relation = Relation::next_to;
  std::string reference_label;     // relation / nearest only
};

const char* to_string(SpatialDescriptor::Direction d);
const char* to_string(SpatialDescriptor::Relation r);

struct ParsedQuery {
  std::optional<std::string> context_label;
  std::string interaction_label;
  std::vector<std::string> functional_candidates;
  ActionClass action = ActionClass::hook_pull;
  std::optional<SpatialDescriptor> spatial;
  std::string original_prompt;  // preserved byte-for-byte
};

/// Total grammar over the descriptor classes the resolver understands:
///   "<ordinal> ... from the <direction>"  -> ordinal
///   "<relation> (of|to) the <noun>"       -> relation
///   "nearest to the <noun>"               -> nearest
/// Anything else (including "N/A") -> kind none. Never throws.
SpatialDescriptor parse_spatial_descriptor(const std::string& text);

/// With a backend: sends the Stage-1 prompt and parses the fixed-order field
/// response (2 retries on malformed output). Without one: deterministic
/// keyword heuristics, intended for backend-free tests.
ParsedQuery parse_query(const std::string& q, ChatClient* backend = nullptr);

// Artifact round trip for the parse stage.
std::string parsed_query_to_json(const ParsedQuery& p);
ParsedQuery parsed_query_from_json(const std::string& text);

}  // namespace ag
