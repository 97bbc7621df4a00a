import type { Tag } from "./types.js";

export type LampColor = "green" | "red" | "grey";

/**
 * Map a breaker status tag to its lamp color.
 *
 * The rule is total and exclusive: every input yields exactly one color.
 * A missing tag or any non-good quality renders grey, because a value the
 * supervisory layer cannot vouch for must not be shown as a live state.
 * Good quality renders green when the breaker reports closed/on and red
 * when it reports open/off.
 */
export function lampColor(tag: Tag | undefined | null): LampColor {
  if (!tag || tag.quality !== "good") {
    return "grey";
  }
  return isOn(tag.value) ? "green" : "red";
}

/** Interpret a status payload as on/closed. */
export function isOn(value: Tag["value"]): boolean {
  if (typeof value === "boolean") return value;
  if (typeof value === "number") return value !== 0;
  if (typeof value === "string") {
    return value === "1" || value.toLowerCase() === "true" || value.toLowerCase() === "on";
  }
  return false;
}

/** Human label matching the lamp color. */
export function lampLabel(color: LampColor): string {
  switch (color) {
    case "green":
      return "ON";
    case "red":
      return "OFF";
    case "grey":
      return "STALE";
  }
}
