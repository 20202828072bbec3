/**
 * The four views. Each view renders into a host element and wires its
 * widgets to the loop controller; all numbers shown come from the service.
 */

import type { ApiClient, Projection } from "./api.js";
import type { LoopController } from "./loop.js";
import { ScatterPlot } from "./scatter.js";
import type { PlotSlot, Store } from "./state.js";
import {
  renderCompareTable,
  renderConfusion,
  renderHeatmap,
  renderProgressChart,
  renderTreemap,
  type ProgressPoint,
} from "./widgets.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text) node.textContent = text;
  return node;
}

function statusLine(host: HTMLElement): (text: string, isError?: boolean) => void {
  const line = el("div", { class: "status" });
  host.appendChild(line);
  return (text, isError = false) => {
    line.textContent = text;
    line.className = isError ? "status error" : "status";
  };
}

export interface ViewContext {
  api: ApiClient;
  store: Store;
  loop: LoopController;
}

/** Synthesis view: the 2x3 plot matrix plus selection and generation
 * controls. Dragging a division line submits side A as the selection. */
export function renderSynthesisView(host: HTMLElement, ctx: ViewContext): void {
  host.replaceChildren();
  const state = ctx.store.get();
  if (!state.dataset || !state.splitId) {
    host.appendChild(el("p", {}, "Load a dataset and make a split in the Data view first."));
    return;
  }
  const controls = el("div", { class: "controls" });
  const classInput = el("input", { placeholder: "focus class (e.g. T5)", size: "12" });
  const modeSelect = el("select");
  for (const mode of ["line", "lasso", "none"]) {
    modeSelect.appendChild(el("option", { value: mode }, mode));
  }
  const kInput = el("input", { type: "number", value: String(state.generation.k), size: "3" });
  const synthButton = el("button", {}, "Synthesize from selection");
  controls.append(
    el("span", {}, "class:"), classInput,
    el("span", {}, "selection:"), modeSelect,
    el("span", {}, "k:"), kInput,
    synthButton,
  );
  host.appendChild(controls);
  const setStatus = statusLine(host);

  const matrix = el("div", { class: "matrix" });
  host.appendChild(matrix);
  const plots: (ScatterPlot | null)[] = [];
  let currentProjection: Projection | null = null;

  const refreshSlot = async (index: number, slot: PlotSlot): Promise<void> => {
    const cell = matrix.children[index] as HTMLElement;
    cell.replaceChildren(el("h4", {}, slot.kind));
    const focusClass = classInput.value.trim() || undefined;
    try {
      if (slot.kind === "pca" || slot.kind === "tsne") {
        const canvas = el("canvas", { width: "420", height: "360" });
        cell.appendChild(canvas);
        const scatter = new ScatterPlot(canvas, {
          onLine: async (line) => {
            if (!currentProjection) return;
            const outcome = await ctx.loop.selectByLine(currentProjection, line, focusClass);
            setStatus(
              `selected ${outcome.selection.count} training message(s); ` +
                `plot-side count ${outcome.clientSideCount}`,
            );
          },
          onLasso: async (vertices) => {
            if (!currentProjection) return;
            const selection = await ctx.loop.selectByLasso(vertices, currentProjection, focusClass);
            setStatus(`lasso selected ${selection.count} training message(s)`);
          },
        });
        scatter.setCaptureMode(modeSelect.value as "line" | "lasso" | "none");
        plots[index] = scatter;
        const projection = await ctx.api.projection(
          state.dataset!,
          state.splitId!,
          { ...slot.spec, method: slot.kind },
          { focusClass, report: ctx.store.get().experimentId ?? undefined },
        );
        currentProjection = projection;
        scatter.setData(projection);
      } else if (slot.kind === "heatmap") {
        const experiment = ctx.store.get().experimentId;
        if (!experiment) {
          cell.appendChild(el("p", {}, "train a model to see the error field"));
          return;
        }
        const canvas = el("canvas", { width: "420", height: "360" });
        cell.appendChild(canvas);
        const epsilonInput = el("input", {
          type: "range", min: "0.02", max: "0.5", step: "0.005",
          value: String(slot.epsilon ?? 0.125),
        });
        cell.appendChild(epsilonInput);
        const draw = async () => {
          const field = await ctx.api.heatmap(state.dataset!, state.splitId!, experiment, {
            epsilon: Number(epsilonInput.value),
            spec: slot.spec,
            focusClass,
          });
          renderHeatmap(canvas, field);
        };
        epsilonInput.addEventListener("change", () => void draw());
        await draw();
      } else if (slot.kind === "tagtreemap") {
        const doc = await ctx.api.tagtreemap(state.dataset!, {
          topK: 10,
          groupBy: focusClass ? "split" : "class",
          split: state.splitId!,
          focusClass,
        });
        cell.appendChild(renderTreemap(doc));
      }
    } catch (err) {
      setStatus(String(err), true);
    }
  };

  for (let i = 0; i < state.slots.length; i++) matrix.appendChild(el("div", { class: "cell" }));
  const refreshAll = () => {
    ctx.store.get().slots.forEach((slot, i) => void refreshSlot(i, slot));
  };
  modeSelect.addEventListener("change", () => {
    for (const plot of plots) plot?.setCaptureMode(modeSelect.value as "line" | "lasso" | "none");
  });
  classInput.addEventListener("change", refreshAll);
  synthButton.addEventListener("click", async () => {
    const target = classInput.value.trim();
    if (!target) {
      setStatus("set the target class before synthesizing", true);
      return;
    }
    ctx.store.update({ generation: { ...state.generation, k: Number(kInput.value) || 5 } });
    try {
      setStatus("synthesizing…");
      const batchId = await ctx.loop.synthesizeFromSelection(target);
      setStatus(`batch ${batchId} generated and added to the cache`);
    } catch (err) {
      setStatus(String(err), true);
    }
  });
  refreshAll();
}

/** Data view: dataset tiles with include/exclude toggles and a merged
 * preview; split creation. */
export function renderDataView(host: HTMLElement, ctx: ViewContext): void {
  host.replaceChildren();
  const setStatus = statusLine(host);
  const controls = el("div", { class: "controls" });
  const fractionInput = el("input", { type: "number", value: "0.2", step: "0.05", size: "4" });
  const seedInput = el("input", { type: "number", value: "1", size: "4" });
  const splitButton = el("button", {}, "Make split");
  controls.append(el("span", {}, "test fraction:"), fractionInput, el("span", {}, "seed:"), seedInput, splitButton);
  host.appendChild(controls);
  const tiles = el("div", { class: "tiles" });
  host.appendChild(tiles);

  const refresh = async () => {
    tiles.replaceChildren();
    const { datasets } = await ctx.api.listDatasets();
    for (const entry of datasets) {
      const tile = el("div", { class: "tile" });
      tile.appendChild(el("h4", {}, `${entry.name}${entry.main ? " (main)" : ""}`));
      tile.appendChild(el("p", {}, `${entry.total} messages, ${entry.classes} classes, ${entry.origin}`));
      if (entry.main) {
        const use = el("button", {}, "Use as working dataset");
        use.addEventListener("click", () => {
          ctx.store.update({ dataset: entry.name });
          setStatus(`working dataset: ${entry.name}`);
        });
        tile.appendChild(use);
      } else {
        const toggle = el("button", {}, ctx.store.get().chosenBatches.includes(entry.name) ? "Exclude" : "Include");
        toggle.addEventListener("click", () => {
          ctx.store.toggleBatch(entry.name);
          void refresh();
        });
        tile.appendChild(toggle);
      }
      try {
        const treemap = await ctx.api.tagtreemap(entry.name, { topK: 6 });
        tile.appendChild(renderTreemap(treemap, 200, 160));
      } catch {
        /* tile stays textual when the treemap cannot be built */
      }
      tiles.appendChild(tile);
    }
    const chosen = ctx.store.get().chosenBatches;
    if (ctx.store.get().dataset && chosen.length > 0) {
      const preview = el("div", { class: "tile merged" });
      preview.appendChild(el("h4", {}, `merged preview: main + ${chosen.join(", ")}`));
      const doc = await ctx.loop.mergePreview(`${ctx.store.get().dataset}+preview`);
      preview.appendChild(el("p", {}, `${doc.total} messages after merge`));
      tiles.appendChild(preview);
    }
  };
  splitButton.addEventListener("click", async () => {
    const dataset = ctx.store.get().dataset;
    if (!dataset) {
      setStatus("choose a working dataset first", true);
      return;
    }
    const result = await ctx.api.split(dataset, Number(fractionInput.value), Number(seedInput.value));
    ctx.store.update({ splitId: result.split_id });
    setStatus(`split ${result.split_id}: train ${result.train_size} / test ${result.test_size}`);
  });
  void refresh().catch((err) => setStatus(String(err), true));
}

/** Model view: start training, watch the progress chart, confusion matrix. */
export function renderModelView(host: HTMLElement, ctx: ViewContext): void {
  host.replaceChildren();
  const setStatus = statusLine(host);
  const controls = el("div", { class: "controls" });
  const epochsInput = el("input", { type: "number", value: "30", size: "4" });
  const lrInput = el("input", { type: "number", value: "0.5", step: "0.1", size: "4" });
  const trainButton = el("button", {}, "Train");
  controls.append(el("span", {}, "epochs:"), epochsInput, el("span", {}, "lr:"), lrInput, trainButton);
  host.appendChild(controls);
  const chart = el("canvas", { width: "640", height: "200" });
  host.appendChild(chart);
  const logBox = el("pre", { class: "log" });
  host.appendChild(logBox);
  const confusionHost = el("div");
  host.appendChild(confusionHost);

  trainButton.addEventListener("click", async () => {
    const points: ProgressPoint[] = [];
    try {
      setStatus("training…");
      const { experimentId } = await ctx.loop.trainAndWait(
        { epochs: Number(epochsInput.value), learning_rate: Number(lrInput.value), l2: 1e-4, batch_size: 64, seed: 0 },
        {
          onPoint: (p) => {
            points.push(p);
            renderProgressChart(chart, points);
            logBox.textContent += `epoch ${p.epoch + 1} loss ${p.loss.toFixed(5)}\n`;
          },
        },
      );
      renderProgressChart(chart, points);
      setStatus(`experiment ${experimentId} trained`);
      const report = await ctx.api.report(experimentId);
      confusionHost.replaceChildren(
        el("p", {}, `overall recall ${report.overall_recall.toFixed(3)}`),
        renderConfusion(report),
      );
    } catch (err) {
      setStatus(String(err), true);
    }
  });
}

/** Results view: side-by-side delta-recall table and before/after overlays. */
export function renderResultsView(host: HTMLElement, ctx: ViewContext): void {
  host.replaceChildren();
  const setStatus = statusLine(host);
  const state = ctx.store.get();
  if (!state.baselineExperimentId || !state.experimentId) {
    host.appendChild(el("p", {}, "Train at least one model to compare results."));
    return;
  }
  void (async () => {
    try {
      const doc = await ctx.loop.compareWithBaseline();
      host.appendChild(renderCompareTable(doc));
      if (state.dataset && state.splitId) {
        const overlays = el("div", { class: "matrix" });
        host.appendChild(overlays);
        for (const experiment of [state.baselineExperimentId!, state.experimentId!]) {
          const cell = el("div", { class: "cell" });
          cell.appendChild(el("h4", {}, experiment));
          const canvas = el("canvas", { width: "420", height: "360" });
          cell.appendChild(canvas);
          overlays.appendChild(cell);
          const projection = await ctx.api.projection(
            state.dataset,
            state.splitId,
            { method: "pca", dims: [0, 1] },
            { report: experiment },
          );
          new ScatterPlot(canvas).setData(projection);
        }
      }
    } catch (err) {
      setStatus(String(err), true);
    }
  })();
}
