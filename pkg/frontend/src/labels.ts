// The closed label sets the service's annotations use. The pickers offer
// exactly these options and nothing else.

export const DA_LABELS = ["Inform", "Question", "Directive", "Commissive"] as const;

export const EMOTION_LABELS = [
  "Fear",
  "Surprise",
  "Anger",
  "Disgust",
  "Like",
  "Happiness",
  "Sadness",
  "None",
] as const;

export type DALabel = (typeof DA_LABELS)[number];
export type EmotionLabel = (typeof EMOTION_LABELS)[number];
