// MBTI axis pickers: one letter per axis composes one of the 16 codes.

export const MBTI_AXES = [
  { key: "E/I", letters: ["E", "I"] as const, label: "Energy" },
  { key: "S/N", letters: ["S", "N"] as const, label: "Information" },
  { key: "T/F", letters: ["T", "F"] as const, label: "Decisions" },
  { key: "J/P", letters: ["J", "P"] as const, label: "Structure" },
] as const;

export type AxisSelection = [string | null, string | null, string | null, string | null];

export function composeMbti(selection: AxisSelection): string | null {
  for (let i = 0; i < MBTI_AXES.length; i++) {
    const letter = selection[i];
    if (!letter || !(MBTI_AXES[i]!.letters as readonly string[]).includes(letter)) {
      return null;
    }
  }
  return selection.join("");
}

export function isValidMbti(code: string): boolean {
  return /^[EI][SN][TF][JP]$/.test(code);
}

export function allMbtiCodes(): string[] {
  const codes: string[] = [];
  for (const a of MBTI_AXES[0].letters)
    for (const b of MBTI_AXES[1].letters)
      for (const c of MBTI_AXES[2].letters)
        for (const d of MBTI_AXES[3].letters) codes.push(a + b + c + d);
  return codes;
}
