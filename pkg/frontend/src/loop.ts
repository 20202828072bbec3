/**
 * The steering loop behind the four views: submit a selection, synthesize
 * from it, merge, retrain, and compare against the baseline. Pure
 * API-driven logic with no DOM so it is testable headlessly; the views
 * call into it.
 */

import type { ApiClient, JobDoc, Projection, SelectionResult } from "./api.js";
import { partitionByLine, type Line, type Point } from "./geometry.js";
import type { Store } from "./state.js";
import type { ProgressPoint } from "./widgets.js";

export interface LineSelectionOutcome {
  selection: SelectionResult;
  /** side-A count from the client-side partition of the fetched embedding,
   * restricted to training points of the focused class: the cross-check
   * that the service and the plot agree. */
  clientSideCount: number;
}

export class LoopController {
  constructor(
    readonly api: ApiClient,
    readonly store: Store,
  ) {}

  private need<T>(value: T | null, what: string): T {
    if (value === null) throw new Error(`${what} not chosen yet`);
    return value;
  }

  /** Submit a division-line selection (side A) and cross-check the count
   * against a local partition of the currently plotted points. */
  async selectByLine(
    projection: Projection,
    line: Line,
    focusClass?: string,
  ): Promise<LineSelectionOutcome> {
    const state = this.store.get();
    const dataset = this.need(state.dataset, "dataset");
    const split = this.need(state.splitId, "split");
    const trainRoles = new Set(["train"]);
    const points: Point[] = [];
    for (let i = 0; i < projection.ids.length; i++) {
      if (!trainRoles.has(projection.roles[i])) continue;
      if (focusClass && projection.labels[i] !== focusClass) continue;
      points.push({ id: projection.ids[i], x: projection.x[i], y: projection.y[i] });
    }
    const [sideA] = partitionByLine(points, line);
    const selection = await this.api.selectRegion(
      dataset,
      split,
      { kind: "halfplane", line, side: "A" },
      {
        focusClass,
        projection: {
          method: (projection.method as "pca" | "tsne") ?? "pca",
          dims: (projection.params["dims"] as [number, number] | undefined) ?? [0, 1],
        },
      },
    );
    this.store.setSelection({
      region: { kind: "halfplane", line, side: "A" },
      result: { ids: selection.ids, count: selection.count },
    });
    return { selection, clientSideCount: sideA.length };
  }

  async selectByLasso(
    vertices: [number, number][],
    projection: Projection,
    focusClass?: string,
  ): Promise<SelectionResult> {
    const state = this.store.get();
    const selection = await this.api.selectRegion(
      this.need(state.dataset, "dataset"),
      this.need(state.splitId, "split"),
      { kind: "polygon", vertices },
      {
        focusClass,
        projection: {
          method: (projection.method as "pca" | "tsne") ?? "pca",
          dims: (projection.params["dims"] as [number, number] | undefined) ?? [0, 1],
        },
      },
    );
    this.store.setSelection({
      region: { kind: "polygon", vertices },
      result: { ids: selection.ids, count: selection.count },
    });
    return selection;
  }

  /** Kick off synthesis for the stored selection and wait for the batch. */
  async synthesizeFromSelection(
    targetLabel: string,
    opts: { synonyms?: string; onProgress?: (job: JobDoc) => void } = {},
  ): Promise<string> {
    const state = this.store.get();
    const selection = state.selection.result;
    if (!selection || selection.ids.length === 0) {
      throw new Error("selection is empty; nothing to synthesize from");
    }
    const { job, batch_id } = await this.api.synthesize({
      dataset: this.need(state.dataset, "dataset"),
      split: this.need(state.splitId, "split"),
      target_label: targetLabel,
      example_ids: selection.ids,
      k: state.generation.k,
      seed: state.generation.seed,
      generator: "mock",
      synonyms: opts.synonyms,
    });
    this.store.trackJob(job);
    const finished = await this.api.waitForJob(job, { onProgress: opts.onProgress });
    this.store.untrackJob(job);
    if (finished.state !== "done") {
      throw new Error(`synthesis failed: ${finished.error}`);
    }
    this.store.toggleBatch(batch_id);
    return batch_id;
  }

  async mergePreview(name: string): Promise<{ name: string; total: number }> {
    const state = this.store.get();
    return this.api.merge(this.need(state.dataset, "dataset"), state.chosenBatches, name);
  }

  /** Train with the chosen batches; resolves with the experiment id once
   * the job reaches 100%. Progress points feed the model-view chart. */
  async trainAndWait(
    config: Record<string, number>,
    opts: { baseline?: string; onPoint?: (p: ProgressPoint) => void } = {},
  ): Promise<{ experimentId: string; points: ProgressPoint[] }> {
    const state = this.store.get();
    const { experiment, job } = await this.api.train({
      dataset: this.need(state.dataset, "dataset"),
      split: this.need(state.splitId, "split"),
      additions: state.chosenBatches,
      config,
      baseline: opts.baseline,
    });
    this.store.trackJob(job);
    const points: ProgressPoint[] = [];
    const finished = await this.api.waitForJob(job, {
      onProgress: (doc) => {
        for (const event of doc.events.slice(points.length)) {
          if (typeof event["epoch"] === "number" && typeof event["loss"] === "number") {
            points.push({
              epoch: event["epoch"] as number,
              loss: event["loss"] as number,
              progress: (event["progress"] as number) ?? 0,
            });
            opts.onPoint?.(points[points.length - 1]);
          }
        }
      },
    });
    this.store.untrackJob(job);
    if (finished.state !== "done") {
      throw new Error(`training failed: ${finished.error}`);
    }
    if (finished.progress !== 1.0) {
      throw new Error(`training finished at ${finished.progress}, expected 1.0`);
    }
    this.store.update({ experimentId: experiment });
    if (!this.store.get().baselineExperimentId) {
      this.store.update({ baselineExperimentId: experiment });
    }
    return { experimentId: experiment, points };
  }

  async compareWithBaseline(): Promise<ReturnType<ApiClient["compare"]> extends Promise<infer T> ? T : never> {
    const state = this.store.get();
    const baseline = this.need(state.baselineExperimentId, "baseline experiment");
    const current = this.need(state.experimentId, "experiment");
    return this.api.compare([baseline, current]);
  }
}
