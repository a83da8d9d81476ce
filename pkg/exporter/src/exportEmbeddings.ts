import { createHash } from "crypto";
import { readdirSync, readFileSync, statSync, writeFileSync } from "fs";
import { join, relative, sep } from "path";

import { Encoder } from "./encoder.js";
import { loadImage, UnreadableImageError } from "./image.js";

export interface ExportConfig {
  imageDir: string;
  encoder: Encoder;
  outPath: string;
  /** Every Nth image per category becomes a query; 0 keeps everything a source. */
  queryEvery: number;
  /** Skip unreadable files with a warning instead of aborting. */
  skipUnreadable: boolean;
  domain: string | null;
}

export interface ExportResult {
  records: number;
  skipped: string[];
  dimension: number;
}

const IMAGE_EXTENSIONS = new Set([".png"]);

function isImageFile(name: string): boolean {
  const dot = name.lastIndexOf(".");
  return dot >= 0 && IMAGE_EXTENSIONS.has(name.slice(dot).toLowerCase());
}

/** Category subdirectories, each holding that category's images. */
function listCategories(root: string): string[] {
  return readdirSync(root)
    .filter((entry) => statSync(join(root, entry)).isDirectory())
    .sort();
}

export function exportEmbeddings(config: ExportConfig, log: (line: string) => void = () => {}): ExportResult {
  const categories = listCategories(config.imageDir);
  if (categories.length === 0) {
    throw new Error(`no category subdirectories under ${config.imageDir}`);
  }
  const lines: { id: string; line: string }[] = [];
  const skipped: string[] = [];
  for (const category of categories) {
    const dir = join(config.imageDir, category);
    const files = readdirSync(dir).filter(isImageFile).sort();
    files.forEach((file, index) => {
      const path = join(dir, file);
      const id = relative(config.imageDir, path).split(sep).join("/");
      let vector: number[];
      try {
        vector = config.encoder.encode(loadImage(path));
      } catch (err) {
        if (err instanceof UnreadableImageError && config.skipUnreadable) {
          log(`warning: skipping ${id}: ${err.message}`);
          skipped.push(id);
          return;
        }
        throw err;
      }
      const role =
        config.queryEvery > 0 && (index + 1) % config.queryEvery === 0 ? "query" : "source";
      const record = {
        id,
        category,
        split: null,
        role,
        domain: config.domain,
        vector,
      };
      lines.push({ id, line: JSON.stringify(record) });
    });
  }
  if (lines.length === 0) {
    throw new Error(`no readable images under ${config.imageDir}`);
  }
  lines.sort((a, b) => (a.id < b.id ? -1 : a.id > b.id ? 1 : 0));
  writeFileSync(config.outPath, lines.map((l) => l.line).join("\n") + "\n", "utf-8");
  return { records: lines.length, skipped, dimension: config.encoder.dimension };
}

export function writeExportManifest(
  manifestPath: string,
  config: ExportConfig,
  result: ExportResult,
): void {
  const manifest = {
    tool: "icl-embedding-exporter",
    subcommand: "export-embeddings",
    encoder: config.encoder.name,
    dimension: result.dimension,
    image_dir: config.imageDir,
    query_every: config.queryEvery,
    domain: config.domain,
    records: result.records,
    skipped: result.skipped,
    output_sha256: createHash("sha256").update(readFileSync(config.outPath)).digest("hex"),
  };
  writeFileSync(manifestPath, JSON.stringify(manifest, null, 2) + "\n", "utf-8");
}
