/**
 * App-wide view state: which of the four views is active, what the plot
 * matrix slots show, the current selection geometry, and active job
 * subscriptions. Plain observable store, no framework.
 */

import type { ProjectionSpec, RegionSpec } from "./api.js";

export type ViewName = "synthesis" | "data" | "model" | "results";

export type PlotKind = "tsne" | "pca" | "heatmap" | "tagtreemap" | "empty";

export interface PlotSlot {
  kind: PlotKind;
  spec: ProjectionSpec;
  focusClass?: string;
  epsilon?: number;
}

export interface SelectionGeometry {
  region: RegionSpec | null;
  /** ids + count as returned by the service for the submitted region */
  result: { ids: string[]; count: number } | null;
}

export interface ViewState {
  view: ViewName;
  dataset: string | null;
  splitId: string | null;
  experimentId: string | null;
  baselineExperimentId: string | null;
  /** 2 x 3 plot matrix of the synthesis/results views */
  slots: PlotSlot[];
  selection: SelectionGeometry;
  chosenBatches: string[];
  activeJobs: string[];
  generation: { k: number; seed: number; temperature: number };
}

const EMPTY_SLOT: PlotSlot = { kind: "empty", spec: {} };

export function initialState(): ViewState {
  return {
    view: "data",
    dataset: null,
    splitId: null,
    experimentId: null,
    baselineExperimentId: null,
    slots: [
      { kind: "tsne", spec: { method: "tsne" } },
      { kind: "pca", spec: { method: "pca", dims: [0, 1] } },
      { kind: "heatmap", spec: { method: "pca", dims: [0, 1] }, epsilon: 0.125 },
      { kind: "tagtreemap", spec: {} },
      { ...EMPTY_SLOT },
      { ...EMPTY_SLOT },
    ],
    selection: { region: null, result: null },
    chosenBatches: [],
    activeJobs: [],
    generation: { k: 5, seed: 0, temperature: 0.7 },
  };
}

type Listener = (state: ViewState) => void;

export class Store {
  private state: ViewState;
  private listeners = new Set<Listener>();

  constructor(state: ViewState = initialState()) {
    this.state = state;
  }

  get(): ViewState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  update(patch: Partial<ViewState>): ViewState {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.state);
    return this.state;
  }

  /** Replace one plot slot, leaving every other slot untouched. */
  setSlot(index: number, slot: PlotSlot): ViewState {
    if (index < 0 || index >= this.state.slots.length) {
      throw new Error(`slot index ${index} out of range`);
    }
    const slots = this.state.slots.slice();
    slots[index] = slot;
    return this.update({ slots });
  }

  setSelection(selection: SelectionGeometry): ViewState {
    return this.update({ selection });
  }

  toggleBatch(batchId: string): ViewState {
    const chosen = this.state.chosenBatches.includes(batchId)
      ? this.state.chosenBatches.filter((b) => b !== batchId)
      : [...this.state.chosenBatches, batchId];
    return this.update({ chosenBatches: chosen });
  }

  trackJob(jobId: string): ViewState {
    return this.update({ activeJobs: [...this.state.activeJobs, jobId] });
  }

  untrackJob(jobId: string): ViewState {
    return this.update({ activeJobs: this.state.activeJobs.filter((j) => j !== jobId) });
  }
}
