/**
 * Defect names and severity level choices, mirroring the annotation
 * service wire format. Saturation offers five signed levels; every other
 * defect offers three.
 */

export interface LevelChoice {
  label: string;
  value: number;
  key: string; // keyboard shortcut
}

export interface DefectSpec {
  id: string; // wire token
  title: string;
  levels: LevelChoice[];
}

const THREE_LEVELS: LevelChoice[] = [
  { label: "None", value: 0.0, key: "1" },
  { label: "Mild", value: 0.5, key: "2" },
  { label: "Severe", value: 1.0, key: "3" },
];

const SATURATION_LEVELS: LevelChoice[] = [
  { label: "Severely under", value: -1.0, key: "1" },
  { label: "Mildly under", value: -0.5, key: "2" },
  { label: "Normal", value: 0.0, key: "3" },
  { label: "Mildly over", value: 0.5, key: "4" },
  { label: "Severely over", value: 1.0, key: "5" },
];

export const DEFECTS: DefectSpec[] = [
  { id: "bad_exposure", title: "Bad exposure", levels: THREE_LEVELS },
  { id: "bad_white_balance", title: "Bad white balance", levels: THREE_LEVELS },
  { id: "saturation", title: "Over/under saturation", levels: SATURATION_LEVELS },
  { id: "noise", title: "Noise", levels: THREE_LEVELS },
  { id: "haze", title: "Haze", levels: THREE_LEVELS },
  { id: "blur", title: "Undesired blur", levels: THREE_LEVELS },
  { id: "composition", title: "Bad composition", levels: THREE_LEVELS },
];

export const DEFECT_IDS = DEFECTS.map((d) => d.id);

export function defectById(id: string): DefectSpec {
  const spec = DEFECTS.find((d) => d.id === id);
  if (!spec) throw new Error(`unknown defect ${id}`);
  return spec;
}

/** Level choice for a keyboard key within a defect's set, or null. */
export function choiceForKey(defect: DefectSpec, key: string): LevelChoice | null {
  return defect.levels.find((l) => l.key === key) ?? null;
}
