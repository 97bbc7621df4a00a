import { describe, expect, it } from "vitest";

import { TagStore } from "../src/store.js";
import { makeTag } from "./helpers.js";

describe("TagStore", () => {
  it("applies snapshot then updates in order", () => {
    const store = new TagStore();
    store.applySnapshot([makeTag({ name: "A/MMXU1.Hz", value: 50.0, seq: 1 })], 1000);
    store.applyUpdate([makeTag({ name: "A/MMXU1.Hz", value: 49.9, seq: 2 })], 1100);
    expect(store.get("A/MMXU1.Hz")?.value).toBe(49.9);
    expect(store.nowMs()).toBe(1100);
  });

  it("ignores a stale sequence racing in behind a newer one", () => {
    const store = new TagStore();
    store.applySnapshot([makeTag({ name: "A/MMXU1.Hz", value: 49.9, seq: 5 })], 2000);
    // A polling response from before the live update arrives late:
    store.applySnapshot([makeTag({ name: "A/MMXU1.Hz", value: 50.0, seq: 3 })], 1500);
    expect(store.get("A/MMXU1.Hz")?.value).toBe(49.9);
    expect(store.get("A/MMXU1.Hz")?.seq).toBe(5);
  });

  it("notifies listeners only for tags that actually changed", () => {
    const store = new TagStore();
    const tag = makeTag({ name: "A/MMXU1.A", value: 1.5, seq: 7 });
    store.applySnapshot([tag], 1000);

    const seen: string[][] = [];
    store.onChange((changed) => seen.push(changed.map((t) => t.name)));

    store.applySnapshot([tag], 1200); // same seq, same quality: no change
    store.applyUpdate([makeTag({ name: "A/MMXU1.A", value: 1.6, seq: 8 })], 1300);

    expect(seen).toEqual([["A/MMXU1.A"]]);
  });

  it("accepts a same-seq entry when only quality flipped", () => {
    const store = new TagStore();
    store.applySnapshot([makeTag({ name: "B/MMXU1.A", value: 2, seq: 4, quality: "good" })], 1);
    store.applyUpdate([makeTag({ name: "B/MMXU1.A", value: 2, seq: 4, quality: "stale" })], 2);
    expect(store.get("B/MMXU1.A")?.quality).toBe("stale");
  });

  it("groups tags by zone with zones sorted", () => {
    const store = new TagStore();
    store.applySnapshot(
      [
        makeTag({ name: "S/MMXU1.A", zone: "SmartHome" }),
        makeTag({ name: "G/MMXU1.A", zone: "Generation" }),
        makeTag({ name: "G/MMXU1.Hz", zone: "Generation" }),
      ],
      100,
    );
    const zones = store.byZone();
    expect([...zones.keys()]).toEqual(["Generation", "SmartHome"]);
    expect(zones.get("Generation")).toHaveLength(2);
  });
});
