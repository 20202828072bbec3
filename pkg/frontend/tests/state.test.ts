import { describe, expect, it } from "vitest";

import { Store, initialState } from "../src/state.js";

describe("Store", () => {
  it("starts with a 2x3 plot matrix", () => {
    const store = new Store();
    expect(store.get().slots).toHaveLength(6);
  });

  it("replacing one slot preserves the others", () => {
    const store = new Store();
    const before = store.get().slots;
    store.setSlot(1, { kind: "pca", spec: { method: "pca", dims: [1, 13] } });
    const after = store.get().slots;
    expect(after[1].spec.dims).toEqual([1, 13]);
    for (const i of [0, 2, 3, 4, 5]) expect(after[i]).toEqual(before[i]);
  });

  it("rejects out-of-range slot indices", () => {
    expect(() => new Store().setSlot(6, { kind: "empty", spec: {} })).toThrow("out of range");
  });

  it("notifies subscribers on update", () => {
    const store = new Store();
    const seen: string[] = [];
    const unsubscribe = store.subscribe((s) => seen.push(s.view));
    store.update({ view: "model" });
    unsubscribe();
    store.update({ view: "results" });
    expect(seen).toEqual(["model"]);
  });

  it("toggles batch inclusion", () => {
    const store = new Store();
    store.trackJob("j1");
    store.toggleBatch("b1");
    store.toggleBatch("b2");
    store.toggleBatch("b1");
    expect(store.get().chosenBatches).toEqual(["b2"]);
    store.untrackJob("j1");
    expect(store.get().activeJobs).toEqual([]);
  });

  it("initial state has no dataset or split chosen", () => {
    const state = initialState();
    expect(state.dataset).toBeNull();
    expect(state.splitId).toBeNull();
  });
});
