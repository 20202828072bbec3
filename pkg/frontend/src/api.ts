/**
 * Typed client for the workbench service. The UI never recomputes a number
 * the service can provide; everything shown is fetched (axis scaling aside),
 * so the browser and the CLI always agree.
 */

export interface DatasetEntry {
  name: string;
  size: number;
  origin: string;
  main: boolean;
  classes: number;
  total: number;
}

export interface DatasetDetail {
  name: string;
  classes: Record<string, number>;
  total: number;
  synthetic: number;
}

export interface SplitResult {
  split_id: string;
  train_size: number;
  test_size: number;
  test_counts: Record<string, number>;
}

export type PointRole =
  | "train"
  | "test"
  | "test_correct"
  | "test_incorrect"
  | "synthetic"
  | "other";

export interface Projection {
  method: string;
  params: Record<string, unknown>;
  ids: string[];
  x: number[];
  y: number[];
  labels: string[];
  roles: PointRole[];
}

export interface ErrorFieldDoc {
  width: number;
  height: number;
  bbox: [number, number, number, number];
  epsilon: number;
  values: number[];
  confidence: number[];
  samples: { id: string; x: number; y: number; correct: boolean }[];
}

export interface TreemapCellDoc {
  name: string;
  rect: { x: number; y: number; w: number; h: number };
  weight: number;
  stats: { subset_size: number; entries: { term: string; count: number; weight: number }[] };
  tag_sizes: number[];
}

export interface TreemapDoc {
  root: { x: number; y: number; w: number; h: number };
  cells: TreemapCellDoc[];
}

export interface SelectionResult {
  mode: string;
  count: number;
  ids: string[];
}

export interface JobDoc {
  id: string;
  kind: string;
  state: "queued" | "running" | "done" | "failed";
  progress: number;
  events: Record<string, number | string>[];
  error: string;
}

export interface ReportDoc {
  labels: string[];
  test_counts: Record<string, number>;
  recalls: Record<string, number>;
  overall_recall: number;
  accuracy: number;
  macro_f1: number;
  confusion: number[][];
  train_class_counts: Record<string, number>;
  test_ids_hash: string;
  timestamp: string;
}

export interface DeltaDoc {
  name: string;
  labels: string[];
  deltas: Record<string, number>;
  overall_delta: number;
  train_deltas: Record<string, number>;
}

export interface CompareDoc {
  baseline: ReportDoc;
  deltas: DeltaDoc[];
  markdown: string;
}

export type RegionSpec =
  | { kind: "halfplane"; line: { a: number; b: number; c: number }; side: "A" | "B" }
  | { kind: "rect"; x0: number; y0: number; x1: number; y1: number }
  | { kind: "polygon"; vertices: [number, number][] };

export interface ProjectionSpec {
  method?: "pca" | "tsne";
  dims?: [number, number];
  perplexity?: number;
  iterations?: number;
  seed?: number;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(readonly baseUrl: string, private fetcher: typeof fetch = fetch) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetcher(`${this.baseUrl}${path}`, init);
    const text = await resp.text();
    if (!resp.ok) {
      let message = text;
      try {
        message = (JSON.parse(text) as { error?: string }).error ?? text;
      } catch {
        /* plain-text error body */
      }
      throw new ApiError(resp.status, message);
    }
    return JSON.parse(text) as T;
  }

  private post<T>(path: string, body: unknown, idempotencyKey?: string): Promise<T> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (idempotencyKey) headers["Idempotency-Key"] = idempotencyKey;
    return this.request<T>(path, { method: "POST", headers, body: JSON.stringify(body) });
  }

  health(): Promise<{ status: string; store: string }> {
    return this.request("/health");
  }

  listDatasets(): Promise<{ datasets: DatasetEntry[] }> {
    return this.request("/datasets");
  }

  datasetDetail(name: string): Promise<DatasetDetail> {
    return this.request(`/datasets/${encodeURIComponent(name)}`);
  }

  uploadDataset(name: string, records: unknown[], main = false): Promise<{ name: string; total: number }> {
    return this.post("/datasets", { name, records, main });
  }

  split(dataset: string, testFraction: number, seed: number): Promise<SplitResult> {
    return this.post("/split", { dataset, test_fraction: testFraction, seed });
  }

  projection(
    dataset: string,
    split: string,
    spec: ProjectionSpec = {},
    opts: { report?: string; focusClass?: string } = {},
  ): Promise<Projection> {
    const params = new URLSearchParams({ dataset, split });
    params.set("method", spec.method ?? "pca");
    params.set("dims", (spec.dims ?? [0, 1]).join(","));
    if (spec.perplexity !== undefined) params.set("perplexity", String(spec.perplexity));
    if (spec.iterations !== undefined) params.set("iterations", String(spec.iterations));
    if (spec.seed !== undefined) params.set("seed", String(spec.seed));
    if (opts.report) params.set("report", opts.report);
    if (opts.focusClass) params.set("class", opts.focusClass);
    return this.request(`/projection?${params}`);
  }

  heatmap(
    dataset: string,
    split: string,
    report: string,
    opts: { epsilon?: number; grid?: [number, number]; spec?: ProjectionSpec; focusClass?: string } = {},
  ): Promise<ErrorFieldDoc> {
    const params = new URLSearchParams({ dataset, split, report });
    const spec = opts.spec ?? {};
    params.set("method", spec.method ?? "pca");
    params.set("dims", (spec.dims ?? [0, 1]).join(","));
    if (opts.epsilon !== undefined) params.set("epsilon", String(opts.epsilon));
    if (opts.grid) {
      params.set("grid_w", String(opts.grid[0]));
      params.set("grid_h", String(opts.grid[1]));
    }
    if (opts.focusClass) params.set("class", opts.focusClass);
    return this.request(`/heatmap?${params}`);
  }

  tagtreemap(
    dataset: string,
    opts: {
      topK?: number;
      groupBy?: "class" | "split" | "correctness" | "line";
      split?: string;
      report?: string;
      focusClass?: string;
      line?: [number, number, number];
    } = {},
  ): Promise<TreemapDoc> {
    const params = new URLSearchParams({ dataset });
    if (opts.topK !== undefined) params.set("top_k", String(opts.topK));
    if (opts.groupBy) params.set("group_by", opts.groupBy);
    if (opts.split) params.set("split", opts.split);
    if (opts.report) params.set("report", opts.report);
    if (opts.focusClass) params.set("class", opts.focusClass);
    if (opts.line) params.set("line", opts.line.join(","));
    return this.request(`/tagtreemap?${params}`);
  }

  selectRegion(
    dataset: string,
    split: string,
    region: RegionSpec,
    opts: { focusClass?: string; projection?: ProjectionSpec; idempotencyKey?: string } = {},
  ): Promise<SelectionResult> {
    return this.post(
      "/select",
      {
        dataset,
        split,
        mode: "region",
        region,
        class: opts.focusClass,
        projection: opts.projection
          ? { ...opts.projection, dims: opts.projection.dims ?? [0, 1] }
          : undefined,
      },
      opts.idempotencyKey,
    );
  }

  selectRandom(
    dataset: string,
    split: string,
    focusClass: string,
    n: number,
    seed: number,
  ): Promise<SelectionResult> {
    return this.post("/select", { dataset, split, mode: "random", class: focusClass, n, seed });
  }

  selectKeywords(
    dataset: string,
    split: string,
    focusClass: string,
    terms: string[],
  ): Promise<SelectionResult> {
    return this.post("/select", { dataset, split, mode: "keywords", class: focusClass, terms });
  }

  synthesize(body: {
    dataset: string;
    split: string;
    target_label: string;
    example_ids: string[];
    k?: number;
    seed?: number;
    generator?: "mock" | "remote";
    synonyms?: string;
    params?: Record<string, number>;
    batch_id?: string;
  }): Promise<{ job: string; batch_id: string }> {
    return this.post("/synthesize", body);
  }

  merge(base: string, additions: string[], name: string): Promise<{ name: string; total: number }> {
    return this.post("/merge", { base, additions, name });
  }

  train(body: {
    dataset: string;
    split: string;
    additions?: string[];
    config?: Record<string, number>;
    baseline?: string;
  }): Promise<{ experiment: string; job: string }> {
    return this.post("/train", body);
  }

  job(id: string): Promise<JobDoc> {
    return this.request(`/jobs/${encodeURIComponent(id)}`);
  }

  async waitForJob(
    id: string,
    opts: { timeoutMs?: number; pollMs?: number; onProgress?: (job: JobDoc) => void } = {},
  ): Promise<JobDoc> {
    const deadline = Date.now() + (opts.timeoutMs ?? 120_000);
    for (;;) {
      const doc = await this.job(id);
      opts.onProgress?.(doc);
      if (doc.state === "done" || doc.state === "failed") return doc;
      if (Date.now() > deadline) throw new ApiError(408, `job ${id} timed out`);
      await new Promise((resolve) => setTimeout(resolve, opts.pollMs ?? 100));
    }
  }

  jobEventsUrl(id: string): string {
    return `${this.baseUrl}/jobs/${encodeURIComponent(id)}/events`;
  }

  reports(): Promise<{ reports: { experiment: string; status: string; overall_recall?: number }[] }> {
    return this.request("/reports");
  }

  report(experimentId: string): Promise<ReportDoc> {
    return this.request(`/reports/${encodeURIComponent(experimentId)}`);
  }

  compare(ids: string[]): Promise<CompareDoc> {
    return this.request(`/reports/compare?ids=${ids.map(encodeURIComponent).join(",")}`);
  }
}
