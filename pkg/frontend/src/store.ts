import type { Tag } from "./types.js";

export type StoreListener = (changed: ReadonlyArray<Tag>) => void;

/**
 * Client-side tag table.
 *
 * Events are applied strictly in arrival order, and within a tag a stale
 * sequence number never overwrites a newer one — a late polling response
 * racing an SSE update must not roll the display backwards.
 */
export class TagStore {
  private readonly tags = new Map<string, Tag>();
  private readonly listeners = new Set<StoreListener>();
  private lastEventMs = 0;

  /** Replace-or-insert every tag of a full snapshot. */
  applySnapshot(tags: ReadonlyArray<Tag>, nowMs: number): void {
    const changed: Tag[] = [];
    for (const tag of tags) {
      if (this.accept(tag)) changed.push(tag);
    }
    this.lastEventMs = Math.max(this.lastEventMs, nowMs);
    if (changed.length > 0) this.notify(changed);
  }

  /** Apply an incremental update; out-of-date entries are ignored. */
  applyUpdate(tags: ReadonlyArray<Tag>, nowMs: number): void {
    this.applySnapshot(tags, nowMs);
  }

  private accept(tag: Tag): boolean {
    const known = this.tags.get(tag.name);
    if (known && tag.seq < known.seq) return false;
    if (known && tag.seq === known.seq && known.quality === tag.quality) return false;
    this.tags.set(tag.name, tag);
    return true;
  }

  get(name: string): Tag | undefined {
    return this.tags.get(name);
  }

  all(): Tag[] {
    return [...this.tags.values()];
  }

  /** Tags grouped by zone, zones sorted alphabetically. */
  byZone(): Map<string, Tag[]> {
    const zones = new Map<string, Tag[]>();
    for (const tag of this.tags.values()) {
      const bucket = zones.get(tag.zone);
      if (bucket) bucket.push(tag);
      else zones.set(tag.zone, [tag]);
    }
    return new Map([...zones.entries()].sort(([a], [b]) => a.localeCompare(b)));
  }

  /** Simulation time of the newest event seen. */
  nowMs(): number {
    return this.lastEventMs;
  }

  onChange(listener: StoreListener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private notify(changed: ReadonlyArray<Tag>): void {
    for (const listener of this.listeners) listener(changed);
  }
}
