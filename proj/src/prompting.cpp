#include "resp/prompting.hpp"

#include <sstream>

#include "resp/prompt_assets.hpp"

namespace resp::prompting {

namespace {

CategorySet parse_category_asset(std::string name, std::string_view text) {
  CategorySet set{std::move(name), {}};
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw Error(ErrorKind::Invariant, "BadAsset", "category line without tab: " + line);
    set.categories.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return set;
}

}  // namespace

const CategorySet& builtin_categories(std::string_view name) {
  static const CategorySet refglitch5 = parse_category_asset("refglitch5", assets::kRefglitch5);
  static const CategorySet realworld9 = parse_category_asset("realworld9", assets::kRealworld9);
  if (name == "refglitch5") return refglitch5;
  if (name == "realworld9") return realworld9;
  throw Error(ErrorKind::Config, "UnknownCategorySet", std::string(name));
}

std::vector<std::string> builtin_category_names() { return {"refglitch5", "realworld9"}; }

std::string_view template_text(PromptKind kind) {
  switch (kind) {
    case PromptKind::SingleFrame:
      return assets::kSingleFrame;
    case PromptKind::PairCleanRef:
      return assets::kPairCleanRef;
    case PromptKind::PairGlitchyRef:
      return assets::kPairGlitchyRef;
  }
  return {};
}

std::string_view template_asset_name(PromptKind kind) {
  switch (kind) {
    case PromptKind::SingleFrame:
      return "single_frame";
    case PromptKind::PairCleanRef:
      return "pair_clean_ref";
    case PromptKind::PairGlitchyRef:
      return "pair_glitchy_ref";
  }
  return {};
}

std::string render_categories(const CategorySet& cats) {
  if (cats.categories.empty()) throw Error(ErrorKind::Config, "EmptyCategorySet", cats.name);
  std::string out;
  for (std::size_t i = 0; i < cats.categories.size(); ++i) {
    if (i) out += "\n\n";
    out += std::to_string(i + 1) + ". " + cats.categories[i].title + " - " + cats.categories[i].definition;
  }
  return out;
}

std::string render_prompt(PromptKind kind, const CategorySet& cats) {
  static constexpr std::string_view placeholder = "{{categories}}";
  std::string text(template_text(kind));
  auto pos = text.find(placeholder);
  if (pos == std::string::npos) throw Error(ErrorKind::Invariant, "BadAsset", "template without placeholder");
  text.replace(pos, placeholder.size(), render_categories(cats));
  return text;
}

std::string canonical_verdict_json(std::string_view reasoning, bool glitch_detected) {
  return json{{"reasoning", reasoning}, {"glitch_detected", glitch_detected}}.dump();
}

namespace {

std::optional<VerdictResponse> verdict_from_value(const json& j) {
  if (!j.is_object()) return std::nullopt;
  auto it = j.find("glitch_detected");
  if (it == j.end()) return std::nullopt;
  VerdictResponse v;
  if (it->is_boolean()) {
    v.glitch_detected = it->get<bool>();
  } else if (it->is_string() && (*it == "true" || *it == "false")) {
    v.glitch_detected = *it == "true";
  } else {
    return std::nullopt;
  }
  if (auto r = j.find("reasoning"); r != j.end() && r->is_string()) v.reasoning = r->get<std::string>();
  return v;
}

std::optional<VerdictResponse> try_parse(std::string_view text) {
  auto j = json::parse(text.begin(), text.end(), nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) return std::nullopt;
  return verdict_from_value(j);
}

// End of the balanced {...} starting at `open`, honoring JSON strings; npos if unbalanced.
std::size_t balanced_end(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_string = false, escape = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    char c = s[i];
    if (in_string) {
      if (escape)
        escape = false;
      else if (c == '\\')
        escape = true;
      else if (c == '"')
        in_string = false;
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i;
    }
  }
  return std::string_view::npos;
}

std::optional<VerdictResponse> from_fences(std::string_view raw) {
  std::size_t pos = 0;
  while ((pos = raw.find("```", pos)) != std::string_view::npos) {
    std::size_t body = raw.find('\n', pos + 3);
    if (body == std::string_view::npos) return std::nullopt;
    std::size_t close = raw.find("```", body + 1);
    if (close == std::string_view::npos) return std::nullopt;
    if (auto v = try_parse(raw.substr(body + 1, close - body - 1))) return v;
    pos = close + 3;
  }
  return std::nullopt;
}

std::optional<VerdictResponse> from_prose(std::string_view raw) {
  for (std::size_t open = raw.find('{'); open != std::string_view::npos; open = raw.find('{', open + 1)) {
    auto close = balanced_end(raw, open);
    if (close == std::string_view::npos) continue;
    if (auto v = try_parse(raw.substr(open, close - open + 1))) return v;
  }
  return std::nullopt;
}

}  // namespace

VerdictResponse parse_verdict(std::string_view raw, FrameLabel default_on_fail) {
  if (auto v = try_parse(raw)) {
    v->parse_status = ParseStatus::Ok;
    return *v;
  }
  auto recovered = from_fences(raw);
  if (!recovered) recovered = from_prose(raw);
  if (recovered) {
    recovered->parse_status = ParseStatus::Recovered;
    return *recovered;
  }
  return {"", is_glitchy(default_on_fail), ParseStatus::Failed};
}

}  // namespace resp::prompting
