import type { Tag } from "./types.js";

/** Unit and decimal places for a measurement, keyed by its attribute suffix. */
interface Presentation {
  label: string;
  unit: string;
  decimals: number;
}

const BY_ATTRIBUTE: Record<string, Presentation> = {
  PhV: { label: "Voltage", unit: "V", decimals: 1 },
  A: { label: "Current", unit: "A", decimals: 2 },
  TotW: { label: "Active power", unit: "kW", decimals: 2 },
  TotVAr: { label: "Reactive power", unit: "kVAr", decimals: 2 },
  Hz: { label: "Frequency", unit: "Hz", decimals: 3 },
};

/** Attribute suffix of a tag path, e.g. "SIED1/MMXU1.TotW" -> "TotW". */
export function attributeOf(name: string): string {
  const dot = name.lastIndexOf(".");
  return dot >= 0 ? name.slice(dot + 1) : name;
}

/** Presentation for a measurement tag, or a plain fallback. */
export function presentationOf(name: string): Presentation {
  return BY_ATTRIBUTE[attributeOf(name)] ?? { label: attributeOf(name), unit: "", decimals: 3 };
}

/** Render a tag value for a tile. Non-numeric values pass through as text. */
export function formatValue(tag: Tag): string {
  const { unit, decimals } = presentationOf(tag.name);
  if (typeof tag.value === "number") {
    const text = tag.value.toFixed(decimals);
    return unit ? `${text} ${unit}` : text;
  }
  if (typeof tag.value === "boolean") {
    return tag.value ? "ON" : "OFF";
  }
  return tag.value === null ? "—" : String(tag.value);
}

/** Millisecond simulation timestamp as a compact clock string. */
export function formatClock(ms: number | null): string {
  if (ms === null || !Number.isFinite(ms)) return "—";
  const total = Math.floor(ms / 1000);
  const h = Math.floor(total / 3600);
  const m = Math.floor((total % 3600) / 60);
  const s = total % 60;
  const pad = (n: number) => String(n).padStart(2, "0");
  return `${pad(h)}:${pad(m)}:${pad(s)}`;
}
