#pragma once

#include <string>

namespace ag::prompts {

// Versioned prompt templates. Placeholders in braces are substituted at send
// time; everything else is fixed protocol text and must not be reworded.

inline constexpr const char* kStage1QueryParsing =
    R"(You translate a natural-language interaction description
into structured grounding for a robotic manipulator.

Given a description, identify:
1. contextual_object: the concrete physical object that must be operated on first.
It must be explicitly mentioned; use "None" if unavailable.
2. interactive_objects: concrete physical interfaces involved in the task
such as handles, knobs, switches, remotes, sockets, ports, or keyholes.
3. functional_object_candidates: ranked intrinsic functional parts
of the contextual_object relevant to the task.
4. action: choose exactly one from
[rotate, key_press, tip_push, hook_pull, pinch_pull, hook_turn, foot_push, plug_in, unplug].
5. spatial_relation [X, Y]: extract at most one explicit spatial relation
if mentioned using [contextual_object, referenced_object]; otherwise output "N/A".

Classify the physical execution implicitly:
- intrinsic manipulation: directly operate a part of the target object.
- external-mediated manipulation: operate a separate control/tool to change
the target object state.
- insertion/receptacle manipulation: insert/remove an object into/from an interface.

Output ONLY the following fields in this exact order:

contextual_object
interactive_objects
......
action
spatial_relation [X, Y] or N/A
original_prompt

Preserve original_prompt exactly. Do not output reasoning or explanations.
)";

inline constexpr const char* kStage2AdversarialGrounding =
    R"(You are helping to localize affordance parts for a given instruction.

Instruction: "{instruction}"
Affordance category: "{category}"

For each relevant visible instance, return exactly two tight bounding boxes:
part_index 1:
the minimum directly operable region needed for the action
such as the part to touch, press or manipulate.
part_index 0: the connected non-core part of the same object
such as base, mount, panel, housing, body, stem, or support.

The two boxes must belong to the same object instance.
Exclude unrelated objects, background, surrounding surfaces
black masked regions and neighboring instances.

Return JSON only as a list of objects with fields:
bbox_2d and part_index."""
)";

// Positive-only variant used when the positive/negative pairing is disabled.
inline constexpr const char* kStage2PositiveOnlyGrounding =
    R"(You are helping to localize affordance parts for a given instruction.

Instruction: "{instruction}"
Affordance category: "{category}"

For each relevant visible instance, return one tight bounding box:
part_index 1:
the minimum directly operable region needed for the action
such as the part to touch, press or manipulate.

Exclude unrelated objects, background, surrounding surfaces
black masked regions and neighboring instances.

Return JSON only as a list of objects with fields:
bbox_2d and part_index.
)";

// Prefixed to the Stage-2 prompt when memory exemplars are attached.
inline constexpr const char* kMemoryRecallPreamble =
    R"(The highlighted regions show where {INT label} instances
appear in similar scenes. Locate all {INT label} instances
in this image and return tight bounding boxes.
)";

inline constexpr const char* kStage3InstanceSelection =
    R"(You are helping to select the most appropriate affordance node
from a scene graph based on a given instruction.

Instruction: "{instruction}"

Available affordance nodes

Please analyze the instruction and select the most
appropriate node that would be needed to perform this action. Consider:
1. The action verb in the instruction
2. The object being acted upon
3. The semantic meaning and context
Respond with ONLY the number (1-{len(affordance_nodes)})
of the most appropriate node.
Selected node number:
)";

/// Replaces every occurrence of `key` with `value`.
std::string substitute(std::string text, const std::string& key, const std::string& value);

}  // namespace ag::prompts
