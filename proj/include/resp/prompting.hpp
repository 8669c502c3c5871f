#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "resp/core.hpp"

namespace resp::prompting {

struct Category {
  std::string title;
  std::string definition;
};

struct CategorySet {
  std::string name;
  std::vector<Category> categories;
};

/// Built-in sets: "refglitch5" (the five synthetic glitch types) and "realworld9".
const CategorySet& builtin_categories(std::string_view name);
std::vector<std::string> builtin_category_names();

/// Raw template text for a prompt kind, with a `{{categories}}` placeholder.
std::string_view template_text(PromptKind kind);

/// Numbered "N. Title - Definition" list, blank line between items.
std::string render_categories(const CategorySet& cats);

std::string render_prompt(PromptKind kind, const CategorySet& cats);

/// Asset file name stem for a template (e.g. "pair_clean_ref").
std::string_view template_asset_name(PromptKind kind);

struct VerdictResponse {
  std::string reasoning;
  bool glitch_detected = false;
  ParseStatus parse_status = ParseStatus::Failed;

  FrameLabel label() const { return label_from_bool(glitch_detected); }
};

/// Extracts the first JSON object that carries `glitch_detected`: the whole text (Ok), a
/// fenced code block or an object embedded in prose (Recovered). Otherwise Failed with the
/// given default.
VerdictResponse parse_verdict(std::string_view raw, FrameLabel default_on_fail = FrameLabel::Clean);

/// Canonical response body, as a well-behaved model would return it.
std::string canonical_verdict_json(std::string_view reasoning, bool glitch_detected);

}  // namespace resp::prompting
